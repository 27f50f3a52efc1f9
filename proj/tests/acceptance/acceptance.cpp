// acceptance: runs the primary acceptance suite and prints one verdict line
// per criterion. Exit status is 0 only when every criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fpuq/analysis.hpp"
#include "fpuq/common.hpp"
#include "fpuq/config.hpp"
#include "fpuq/ensemble.hpp"
#include "fpuq/gnn.hpp"
#include "fpuq/gridfile.hpp"
#include "fpuq/lpdm.hpp"
#include "fpuq/mesh.hpp"
#include "fpuq/molefrac.hpp"
#include "fpuq/pipeline.hpp"
#include "fpuq/postprocess.hpp"
#include "fpuq/train.hpp"

namespace fs = std::filesystem;
using namespace fpuq;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, const char* spec = "%.4g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

double seconds(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Verdict gradient_correctness() {
    const auto t0 = Clock::now();
    Hyperparams hp;
    hp.latent = 8;
    hp.rounds = 2;
    hp.side = 10;
    hp.mesh_spacing = 3.0;
    const Graph g = Graph::build(hp.side, hp.mesh_spacing);
    std::mt19937_64 rng(31);
    std::normal_distribution<double> nd;
    Mat<double> x(static_cast<Eigen::Index>(hp.in_channels), static_cast<Eigen::Index>(g.cells()));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
    Eigen::VectorXd target(static_cast<Eigen::Index>(g.cells()));
    for (Eigen::Index i = 0; i < target.size(); ++i) target[i] = nd(rng) * 3.0 - 5.0;
    const auto res = gradient_check(init_params(7, hp), x, target, g, 1e-5, 200, 7);
    const double t = seconds(t0);
    return {res.max_relative_error < 1e-4 && t < 30.0,
            "max relative error " + fmt(res.max_relative_error) + " over " + std::to_string(res.checked) + " parameters (worst " +
                res.worst_tensor + "), " + fmt(t, "%.1f") + " s"};
}

MetField constant_met(const GridSpec& g, double u, double v) {
    MetField met;
    met.grid = g;
    met.levels = MetConfig::default_levels();
    for (double t = 0.0; t <= 200.0; t += 6.0) met.times.push_back(t);
    const std::size_t n = met.times.size() * met.levels.size() * g.size();
    met.u.assign(n, u);
    met.v.assign(n, v);
    met.terrain.assign(g.size(), 0.0);
    met.land.assign(g.size(), 1);
    return met;
}

Verdict oracle_physics() {
    const GridSpec g;
    SimConfig still;
    still.k_h = 0.0;
    still.sigma_w = 0.0;
    const Release r{3, g.lat_of(32.0), g.lon_of(40.0), 50.0, 150.0};

    // (a) all sensitivity in the release cell
    bool a = true;
    {
        const Footprint fp = simulate_footprint(r, constant_met(g, 0.0, 0.0), still);
        const std::size_t cell = g.index(32, 40);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double expect = k == cell ? still.t_back_h * 3600.0 : 0.0;
            if (std::abs(fp.values()[k] - expect) > 1e-9 * still.t_back_h * 3600.0) a = false;
        }
    }

    // (b) constant eastward wind: step-by-step westward trajectory deposition
    bool b = true;
    {
        SimConfig cfg = still;
        cfg.n_particles = 3;
        const Footprint fp = simulate_footprint(r, constant_met(g, 10.0, 0.0), cfg);
        std::vector<double> oracle(g.size(), 0.0);
        const double dlon = -10.0 * cfg.dt / (kMetresPerDegreeLat * std::cos(r.lat * std::numbers::pi / 180.0));
        double lon = r.lon;
        for (std::size_t k = 0; k < cfg.n_steps(); ++k) {
            const double col = std::floor((lon - g.lon0) / g.d_lon + 0.5);
            if (col < 0) break;
            oracle[g.index(32, static_cast<std::size_t>(col))] += cfg.dt;
            lon += dlon;
        }
        for (std::size_t k = 0; k < g.size(); ++k)
            if (std::abs(fp.values()[k] - oracle[k]) > 1e-9 * std::max(1.0, oracle[k])) b = false;
    }

    // (c) deposited mass never exceeds the integration time
    bool c = true;
    {
        const MetField met = generate_met(MetConfig{}, g, {0.0, 200.0});
        std::mt19937_64 rng(2024);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int trial = 0; trial < 100; ++trial) {
            SimConfig cfg;
            cfg.n_particles = 5 + static_cast<std::size_t>(30 * u(rng));
            cfg.dt = 300.0 + 900.0 * u(rng);
            cfg.t_back_h = 2.0 + 10.0 * u(rng);
            cfg.k_h = 20000.0 * u(rng);
            cfg.sigma_w = 20.0 * u(rng);
            cfg.h_surf = 20.0 + 300.0 * u(rng);
            cfg.seed = static_cast<std::uint64_t>(trial);
            const Release q{static_cast<std::uint64_t>(trial), g.lat_of(63.0 * u(rng)), g.lon_of(63.0 * u(rng)), 500.0 * u(rng),
                            100.0 + 90.0 * u(rng)};
            double total = 0.0;
            for (double v : simulate_footprint(q, met, cfg).values()) {
                if (!(v >= 0.0) || !std::isfinite(v)) c = false;
                total += v;
            }
            if (total > static_cast<double>(cfg.n_steps()) * cfg.dt * (1.0 + 1e-12)) c = false;
        }
    }
    auto yn = [](bool ok) { return ok ? "ok" : "FAILED"; };
    return {a && b && c, std::string("(a) release cell ") + yn(a) + ", (b) trajectory cell-for-cell " + yn(b) +
                             ", (c) mass bound on 100 configs " + yn(c)};
}

std::vector<fs::path> files_under(const fs::path& root) {
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
    std::sort(out.begin(), out.end());
    return out;
}

Verdict determinism(const PipelineConfig& cfg, const fs::path& a, const fs::path& b) {
    fs::remove_all(a);
    fs::remove_all(b);
    auto t0 = Clock::now();
    reproduce(cfg, a, 1, false);
    const double ta = seconds(t0);
    t0 = Clock::now();
    reproduce(cfg, b, 1, false);
    const double tb = seconds(t0);

    const auto fa = files_under(a), fb = files_under(b);
    std::size_t differing = 0;
    std::string first;
    for (const auto& rel : fa) {
        if (!fs::exists(b / rel) || read_file(a / rel) != read_file(b / rel)) {
            if (first.empty()) first = rel.string();
            ++differing;
        }
    }
    const bool same_set = fa == fb;
    const double slowest = std::max(ta, tb);
    std::string detail = std::to_string(fa.size()) + " files compared, " + std::to_string(differing) + " differ";
    if (!first.empty()) detail += " (first: " + first + ")";
    if (!same_set) detail += ", file sets differ";
    detail += "; reproduce " + fmt(ta, "%.0f") + " s / " + fmt(tb, "%.0f") + " s";
    return {same_set && differing == 0 && slowest < 1800.0, detail};
}

Verdict learning_signal(const nlohmann::json& summary) {
    const auto& m = summary.at("test_metrics");
    const double r2 = m.at("log").at("r2").get<double>();
    const double iou = m.at("log").at("iou").get<double>();
    const double base = m.at("constant_mean_baseline_log").at("r2").get<double>();
    return {r2 > 0.5 && iou > 0.5, "ensemble mean on " + std::to_string(summary.at("releases").get<int>()) +
                                       " test footprints: R2 " + fmt(r2) + ", IoU " + fmt(iou) + " at tau " +
                                       fmt(summary.at("active_tau").get<double>()) + "; constant-mean baseline R2 " + fmt(base)};
}

Verdict spread_error(const nlohmann::json& summary) {
    const auto& s = summary.at("spread_error");
    const double map_rho = s.at("maps_std_vs_abs_mean_error").at("rho").get<double>();
    bool ok = map_rho >= 0.2;
    std::string detail = "maps rho " + fmt(map_rho, "%.3f") + " (n " + std::to_string(s.at("maps_std_vs_abs_mean_error").at("n").get<int>()) + ")";
    for (const auto& [flux, v] : s.at("molefrac").items()) {
        const double rho = v.at("spread_error").at("rho").get<double>();
        ok = ok && rho > 0.0;
        detail += "; molefrac " + flux + " rho " + fmt(rho, "%.3f");
    }
    return {ok, detail};
}

Verdict cv_unit_cases() {
    const double eps = 1e-9;
    const std::vector<double> base = {0.0, 0.7, 3.0, 12.5};
    const auto same = ensemble_stats(std::vector<std::vector<double>>(4, base), eps);
    bool ident = true;
    for (double v : same.cv) ident = ident && v == 0.0;
    const auto s = ensemble_stats(std::vector<std::vector<double>>{{0.0, 0.0}, {2.0, 0.0}, {0.0, 0.0}, {2.0, 0.0}}, eps);
    const double err = std::abs(s.cv[0] - 1.0 / (1.0 + eps));
    const bool zero_ok = std::isfinite(s.cv[1]) && s.cv[1] == 0.0;
    return {ident && err <= 1e-9 && zero_ok, std::string("identical members CV ") + (ident ? "0" : "nonzero") +
                                                 ", (0,2,0,2) |CV - 1/(1+eps)| " + fmt(err) + ", all-zero CV " + fmt(s.cv[1])};
}

Verdict quantile_map_contract(const PipelineConfig& cfg, const fs::path& run) {
    const RunLayout L{run, cfg.paths};
    const DatasetManifest manifest = DatasetManifest::load(L.manifest());
    const TrainingData data = load_training_data(manifest, cfg.postprocess);
    const Checkpoint ck = load_checkpoint(L.checkpoint(cfg.ensemble.seeds.front()));
    const Graph graph = Graph::build(ck.params.hp.side, ck.params.hp.mesh_spacing);
    std::vector<double> preds, truths;
    for (const auto& s : data.validation) {
        const Eigen::VectorXf p = predict_log(ck.params, s.x, graph);
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            preds.push_back(static_cast<double>(p[i]));
            truths.push_back(static_cast<double>(s.target[i]));
        }
    }
    const QuantileMap qm = fit_quantile_map(preds, truths, cfg.postprocess.n_q);
    std::vector<double> mapped = preds;
    apply_quantile_map(mapped, qm);
    std::sort(mapped.begin(), mapped.end());
    std::sort(truths.begin(), truths.end());
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < qm.levels.size(); ++k)
        worst = std::max(worst, std::abs(empirical_quantile(mapped, qm.levels[k]) - empirical_quantile(truths, qm.levels[k])));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(qm.source.front() - 5.0, qm.source.back() + 5.0);
    std::size_t violations = 0;
    for (int i = 0; i < 1000; ++i) {
        double x = u(rng), y = u(rng);
        if (x > y) std::swap(x, y);
        if (qm.apply(x) > qm.apply(y)) ++violations;
    }
    return {worst <= 1e-6 && violations == 0, std::to_string(preds.size()) + " validation cells: max interior-knot gap " + fmt(worst) +
                                                  " log units; " + std::to_string(violations) + " monotonicity violations in 1000 pairs"};
}

Verdict molefrac_algebra() {
    const GridSpec g;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto field = [&](double zero_frac) {
        std::vector<double> v(g.size());
        for (auto& x : v) x = u(rng) < zero_frac ? 0.0 : std::exp(8.0 * u(rng) - 4.0);
        return v;
    };
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); };
    double worst_lin = 0.0, worst_comm = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto fp = field(0.8), f1 = field(0.0), f2 = field(0.5);
        const double a = 0.1 + 5.0 * u(rng), b = 0.1 + 5.0 * u(rng);
        std::vector<double> combo(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) combo[i] = a * f1[i] + b * f2[i];
        worst_lin = std::max(worst_lin, rel(mole_fraction(fp, combo), a * mole_fraction(fp, f1) + b * mole_fraction(fp, f2)));
        std::vector<std::vector<double>> members;
        for (int m = 0; m < 4; ++m) members.push_back(field(0.8));
        std::vector<double> values;
        for (const auto& m : members) values.push_back(mole_fraction(m, f1));
        worst_comm = std::max(worst_comm, rel(ensemble_stats_scalar(values).mean, mole_fraction(ensemble_stats(members).mean, f1)));
    }
    const GridSpec g2{2, 2, 0.0, 0.0, 1.0, 1.0};
    const double ex = mole_fraction(Footprint(g2, {}, {1, 2, 3, 4}, Space::linear), FluxField{g2, {4, 3, 2, 1}});
    return {worst_lin <= 1e-10 && worst_comm <= 1e-10 && ex == 20.0,
            "linearity " + fmt(worst_lin) + ", commutation " + fmt(worst_comm) + " (max relative, 100 pairs); 2x2 example " + fmt(ex, "%.17g")};
}

Verdict speedup(const PipelineConfig& cfg, const fs::path& run, const fs::path& report) {
    const RunLayout L{run, cfg.paths};
    const BenchReport rep = bench(cfg, L.manifest(), L.checkpoint(cfg.ensemble.seeds.front()), 10, L.met());
    write_text(report, rep.to_json().dump(2) + "\n");
    return {rep.ratio() >= 10.0, "oracle median " + fmt(rep.oracle_median_s, "%.4f") + " s, emulator median " +
                                     fmt(rep.emulator_median_s, "%.4f") + " s, ratio " + fmt(rep.ratio(), "%.1f") + " (n 10)"};
}

std::size_t lattice_count(std::size_t side, double r) {
    const double hi = static_cast<double>(side) - 1.0;
    const int span = static_cast<int>(4 * side / r) + 4;
    std::size_t count = 0;
    for (int k = -span; k <= span; ++k)
        for (int i = -span; i <= span; ++i) {
            const double x = i * r + k * r / 2.0, y = k * r * std::sqrt(3.0) / 2.0;
            if (x >= -1e-6 && x <= hi + 1e-6 && y >= -1e-6 && y <= hi + 1e-6) ++count;
        }
    return count;
}

Verdict mesh_structure() {
    const Mesh m = build_mesh(50, 4.0);
    std::size_t interior = 0, bad_degree = 0;
    for (std::size_t k = 0; k < m.size(); ++k) {
        if (!m.is_interior(k)) continue;
        ++interior;
        if (m.degree(k) != 6) ++bad_degree;
    }
    const GridMeshMap maps = build_maps(m, 50);
    std::vector<int> seen(50 * 50, 0);
    for (const auto& cells : maps.cells_of_node)
        for (auto c : cells) ++seen[c];
    const bool partition = std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
    const std::size_t expect = lattice_count(50, 4.0);
    return {bad_degree == 0 && interior > 0 && partition && m.size() == expect,
            std::to_string(m.size()) + " nodes (lattice enumeration " + std::to_string(expect) + "), " + std::to_string(interior) +
                " interior with degree 6: " + (bad_degree == 0 ? "all" : std::to_string(interior - bad_degree)) +
                ", encoder partition " + (partition ? "exact" : "BROKEN")};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Primary acceptance suite"};
    std::string work = "acceptance_work", config;
    app.add_option("--work", work, "Scratch directory for the reproduce runs");
    app.add_option("--config", config, "Pipeline config (built-in defaults when omitted)");
    CLI11_PARSE(app, argc, argv);

    PipelineConfig cfg;
    try {
        if (!config.empty()) cfg = load_config(config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    const fs::path w(work);
    fs::create_directories(w);

    std::size_t passed = 0, total = 0;
    std::string lines;
    auto emit = [&](const std::string& line) {
        std::cout << line << std::endl;
        lines += line + "\n";
    };
    auto report = [&](const std::string& name, auto&& fn) {
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        ++total;
        if (v.pass) ++passed;
        emit((v.pass ? "PASS " : "FAIL ") + name + ": " + v.detail);
    };

    const fs::path run_a = w / "run_a", run_b = w / "run_b";
    report("gradient correctness", gradient_correctness);
    report("oracle physics", oracle_physics);
    report("end-to-end determinism", [&] { return determinism(cfg, run_a, run_b); });
    nlohmann::json summary;
    auto load_summary = [&] {
        if (summary.is_null()) summary = nlohmann::json::parse(read_text(RunLayout{run_a, cfg.paths}.analysis() / "summary.json"));
        return summary;
    };
    report("learning signal", [&] { return learning_signal(load_summary()); });
    report("spread-error correspondence", [&] { return spread_error(load_summary()); });
    report("CV unit cases", cv_unit_cases);
    report("quantile-map contract", [&] { return quantile_map_contract(cfg, run_a); });
    report("mole-fraction algebra", molefrac_algebra);
    report("desk-scale speed-up", [&] { return speedup(cfg, run_a, w / "bench.json"); });
    report("mesh structure", mesh_structure);

    emit("acceptance: " + std::to_string(passed) + "/" + std::to_string(total) + " criteria passed");
    write_text(w / "acceptance_report.txt", lines);
    return passed == total ? 0 : 1;
}
