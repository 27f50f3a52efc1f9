#include "fpuq/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>

#include "fpuq/analysis.hpp"
#include "fpuq/common.hpp"
#include "fpuq/gridfile.hpp"
#include "fpuq/lpdm.hpp"

namespace fpuq {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

MetField met_for(const PipelineConfig& cfg, const fs::path& met_file) {
    if (!met_file.empty()) {
        MetField met = read_met(met_file);
        if (!(met.grid == cfg.grid)) throw ValidationError(met_file.string() + ": met grid differs from the config grid");
        return met;
    }
    MetField met = generate_met(cfg.met, cfg.grid, cfg.met_range());
    met.config_hash = cfg.hash();
    return met;
}

std::string rel(const fs::path& target, const fs::path& base) {
    return fs::relative(fs::absolute(target), fs::absolute(base)).generic_string();
}

const std::vector<ManifestEntry>& split_of(const DatasetManifest& m, const std::string& split) {
    if (split == "train") return m.train;
    if (split == "validation") return m.validation;
    if (split == "test") return m.test;
    throw ValidationError("unknown split \"" + split + "\" (expected train, validation or test)");
}

std::string release_dir(std::uint64_t id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "r%06llu", static_cast<unsigned long long>(id));
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

nlohmann::json correlation_json(std::span<const double> spread, std::span<const double> err) {
    try {
        const auto c = spread_error_correlation(spread, err);
        nlohmann::json j = {{"n", c.n}};
        if (std::isnan(c.rho))
            j["rho"] = nullptr;
        else
            j["rho"] = c.rho;
        return j;
    } catch (const ValidationError& e) {
        return {{"rho", nullptr}, {"n", 0}, {"error", e.what()}};
    }
}

}  // namespace

fs::path epoch_log_path(const fs::path& ckpt) {
    auto p = ckpt;
    p += ".epochs.csv";
    return p;
}

MetField stage_gen_met(const PipelineConfig& cfg, const fs::path& out_file) {
    MetField met = met_for(cfg, {});
    write_met(out_file, met);
    return met;
}

DatasetManifest stage_gen_data(const PipelineConfig& cfg, const fs::path& out_dir, const fs::path& met_file) {
    const MetField met = met_for(cfg, met_file);
    const auto releases = sample_releases(cfg.dataset.seed, cfg.grid, cfg.dataset.splits.total(), cfg.dataset.t_start,
                                          cfg.dataset.t_end, cfg.dataset.altitude);
    DatasetOptions opt;
    opt.out_dir = out_dir;
    opt.splits = cfg.dataset.splits;
    opt.features = cfg.features;
    opt.patch_side = cfg.dataset.patch_side;
    opt.config_hash = cfg.hash();
    return generate_dataset(releases, met, cfg.sim, opt);
}

std::vector<TrainResult> stage_train(const PipelineConfig& cfg, const fs::path& manifest, const std::vector<std::uint64_t>& seeds,
                                     const std::vector<fs::path>& out_ckpts, unsigned jobs) {
    if (seeds.size() != out_ckpts.size()) throw ValidationError("train: one output path per seed required");
    const DatasetManifest m = DatasetManifest::load(manifest);
    const TrainingData data = load_training_data(m, cfg.postprocess);
    std::vector<TrainResult> results(seeds.size());
    const std::uint64_t hash = cfg.hash();
    parallel_for(
        seeds.size(),
        [&](std::size_t i) {
            results[i] = train_model(data, seeds[i], cfg.train, cfg.model, cfg.postprocess, hash);
            save_checkpoint(out_ckpts[i], results[i].checkpoint);
            results[i].post.save(post_path_for(out_ckpts[i]));
            write_epoch_log_csv(epoch_log_path(out_ckpts[i]), results[i].log);
        },
        std::max(1u, jobs));
    return results;
}

EnsembleIndex stage_ensemble(const PipelineConfig& cfg, const std::vector<fs::path>& ckpts, const fs::path& manifest,
                             const fs::path& out_dir, const std::string& split) {
    std::vector<EnsembleMember> members;
    for (const auto& c : ckpts) members.push_back(load_member(c));
    check_compatible(members);
    const DatasetManifest m = DatasetManifest::load(manifest);
    const auto& entries = split_of(m, split);
    if (entries.empty()) throw ValidationError("ensemble: split " + split + " is empty");
    const auto& hp = members.front().checkpoint.params.hp;
    const Graph graph = Graph::build(hp.side, hp.mesh_spacing);
    const std::uint64_t hash = cfg.hash();

    EnsembleIndex index;
    index.n_members = members.size();
    index.eps = cfg.postprocess.eps_cv;
    index.cv_space = cfg.ensemble.cv_space;
    index.split = split;
    index.base_dir = out_dir;
    fs::create_directories(out_dir);
    for (const auto& c : ckpts) index.checkpoints.push_back(rel(c, out_dir));
    index.entries.resize(entries.size());

    parallel_for(entries.size(), [&](std::size_t i) {
        const ManifestEntry& e = entries[i];
        const FeatureTensor raw = read_features(m.resolve(e.features));
        const GridFile truth = read_grid_file(m.resolve(e.footprint));
        if (!(truth.grid == cfg.grid)) throw ValidationError(e.footprint + ": grid differs from the config grid");
        const EnsemblePrediction pred = ensemble_predict(members, raw, graph, cfg.grid, cfg.postprocess.eps_cv, cfg.ensemble.cv_space);
        const auto err = mean_error(pred.stats.mean, truth.values);

        EnsembleIndexEntry& en = index.entries[i];
        en.release = e.release;
        const std::string dir = release_dir(e.release.id);
        auto put = [&](const std::string& name, const std::vector<double>& values) {
            GridFile gf{cfg.grid, e.release, Space::linear, hash, values};
            write_grid_file(out_dir / dir / name, gf);
            return dir + "/" + name;
        };
        for (std::size_t k = 0; k < pred.members.size(); ++k)
            en.members.push_back(put("member_" + std::to_string(k) + ".fpg", pred.members[k]));
        en.mean = put("mean.fpg", pred.stats.mean);
        en.stddev = put("std.fpg", pred.stats.stddev);
        en.cv = put("cv.fpg", pred.stats.cv);
        en.error = put("error.fpg", err);
    });
    index.save(out_dir / "ensemble.json");
    return index;
}

std::vector<MoleFractionRecord> stage_molefrac(const PipelineConfig& cfg, const fs::path& manifest, const fs::path& ensemble_index,
                                               const fs::path& out_dir) {
    const DatasetManifest m = DatasetManifest::load(manifest);
    const EnsembleIndex idx = EnsembleIndex::load(ensemble_index);
    const FluxField bottomup = synth_bottomup_flux(cfg.flux, cfg.grid);
    const FluxField uniform = uniform_flux(bottomup);
    const std::uint64_t hash = cfg.hash();
    write_grid_file(out_dir / "flux_bottomup.fpg", GridFile::from_flux(bottomup, hash));
    write_grid_file(out_dir / "flux_uniform.fpg", GridFile::from_flux(uniform, hash));
    const auto records = molefrac_dataset(m, idx, {{"bottomup", bottomup}, {"uniform", uniform}}, cfg.postprocess.eps_cv);
    write_molefrac_csv(out_dir / "molefrac.csv", records);
    return records;
}

nlohmann::json stage_analyze(const PipelineConfig& cfg, const fs::path& manifest, const fs::path& ensemble_index,
                             const fs::path& molefrac_csv, const fs::path& out_dir, const fs::path& met_file) {
    const DatasetManifest m = DatasetManifest::load(manifest);
    const EnsembleIndex idx = EnsembleIndex::load(ensemble_index);
    if (idx.entries.empty()) throw ValidationError("analyze: ensemble index has no entries");
    const MetField met = met_for(cfg, met_file);
    std::map<std::uint64_t, const ManifestEntry*> by_id;
    for (const auto* split : {&m.train, &m.validation, &m.test})
        for (const auto& e : *split) by_id[e.release.id] = &e;

    // Thresholds come from the members' post-processing (shared training data).
    const PostprocessParams post = PostprocessParams::load(post_path_for(idx.resolve(idx.checkpoints.front())));
    const double tau = post.tau, eps_log = post.eps_log;
    const double tau_log = to_log(tau, eps_log);
    const std::size_t side = cfg.dataset.patch_side;

    const std::size_t n = idx.entries.size();
    std::vector<ReleaseFields> fields(n);
    std::vector<std::vector<double>> patch_sums(n);
    std::vector<std::vector<double>> member_log_preds(n);
    parallel_for(n, [&](std::size_t i) {
        const auto& en = idx.entries[i];
        const auto it = by_id.find(en.release.id);
        if (it == by_id.end()) throw ValidationError("analyze: release " + std::to_string(en.release.id) + " not in manifest");
        ReleaseFields& f = fields[i];
        f.truth = read_grid_file(m.resolve(it->second->footprint)).values;
        f.mean = read_grid_file(idx.resolve(en.mean)).values;
        f.stddev = read_grid_file(idx.resolve(en.stddev)).values;
        f.cv = read_grid_file(idx.resolve(en.cv)).values;
        f.error = read_grid_file(idx.resolve(en.error)).values;
        f.mask = patch_mask(cfg.grid, en.release, side);
        for (const auto& mp : en.members) {
            const auto v = read_grid_file(idx.resolve(mp)).values;
            double s = 0.0;
            for (double x : v) s += x;
            patch_sums[i].push_back(s);
        }
    });

    // Test-set metrics of the ensemble mean over each release's patch window.
    MetricAccumulator acc_log(tau_log), acc_lin(tau);
    double log_truth_sum = 0.0;
    std::size_t cells = 0;
    for (const auto& f : fields)
        for (std::size_t c = 0; c < f.mask.size(); ++c)
            if (f.mask[c]) {
                log_truth_sum += to_log(f.truth[c], eps_log);
                ++cells;
            }
    const double log_truth_mean = log_truth_sum / static_cast<double>(cells);
    MetricAccumulator acc_base(tau_log);
    for (const auto& f : fields) {
        std::vector<double> pl, tl, pn, tn, base;
        for (std::size_t c = 0; c < f.mask.size(); ++c) {
            if (!f.mask[c]) continue;
            pl.push_back(to_log(f.mean[c], eps_log));
            tl.push_back(to_log(f.truth[c], eps_log));
            pn.push_back(f.mean[c]);
            tn.push_back(f.truth[c]);
            base.push_back(log_truth_mean);
        }
        acc_log.add(pl, tl);
        acc_lin.add(pn, tn);
        acc_base.add(base, tl);
    }

    const SpatialAggregate agg = spatial_aggregate(fields, cfg.grid);
    fs::create_directories(out_dir);
    for (AggStat s : kAggStats) write_map_csv(out_dir / ("map_" + agg_stat_name(s) + ".csv"), cfg.grid, agg.field(s), agg.count);
    std::vector<double> abs_mean_err = agg.field(AggStat::error);
    for (double& v : abs_mean_err) v = std::abs(v);

    std::vector<Release> releases;
    std::vector<double> fp_cv, speeds;
    std::vector<ScalarMembers> fp_series;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = idx.entries[i].release;
        releases.push_back(r);
        const auto s = ensemble_stats_scalar(patch_sums[i], cfg.postprocess.eps_cv);
        fp_cv.push_back(s.cv);
        speeds.push_back(surface_wind(met, r).speed);
        fp_series.push_back({r.id, r.time, patch_sums[i]});
    }
    const WindRose rose = wind_rose(releases, met, speeds);
    const WindRose cv_rose = wind_rose(releases, met, fp_cv);
    write_rose_csv(out_dir / "wind_rose.csv", rose);
    write_rose_csv(out_dir / "cv_rose.csv", cv_rose);
    write_series_csv(out_dir / "cv_series_footprint.csv", temporal_cv_series(fp_series, cfg.postprocess.eps_cv));

    // Mole-fraction products per flux field.
    const auto records = read_molefrac_csv(molefrac_csv);
    std::map<std::string, std::vector<MoleFractionRecord>> per_flux;
    for (auto r : records) {
        const auto it = by_id.find(r.release_id);
        if (it == by_id.end()) throw ValidationError("analyze: molefrac release " + std::to_string(r.release_id) + " not in manifest");
        r.lat = it->second->release.lat;
        r.lon = it->second->release.lon;
        per_flux[r.flux_id].push_back(std::move(r));
    }
    const GridSpec coarse = coarsen(cfg.grid, cfg.analysis.coarse_factor);
    nlohmann::json mf_json = nlohmann::json::object();
    for (const auto& [flux, recs] : per_flux) {
        std::vector<ScalarMembers> series;
        std::vector<double> spread, abs_err, cv, rel_err;
        std::array<std::vector<PointValue>, 5> pts;
        for (const auto& r : recs) {
            series.push_back({r.release_id, r.time, r.members});
            spread.push_back(r.stats.stddev);
            abs_err.push_back(std::abs(r.stats.mean - r.truth));
            cv.push_back(r.stats.cv);
            rel_err.push_back(r.truth > 0.0 ? std::abs(r.stats.mean - r.truth) / r.truth : std::nan(""));
            const double vals[5] = {r.truth, r.stats.mean, r.stats.mean - r.truth, r.stats.stddev, r.stats.cv};
            for (std::size_t k = 0; k < 5; ++k) pts[k].push_back({r.lat, r.lon, vals[k]});
        }
        write_series_csv(out_dir / ("cv_series_molefrac_" + flux + ".csv"), temporal_cv_series(series, cfg.postprocess.eps_cv));
        const char* names[5] = {"truth", "mean", "error", "std", "cv"};
        for (std::size_t k = 0; k < 5; ++k) {
            const CoarseMap cm = scatter_to_grid(pts[k], coarse);
            write_map_csv(out_dir / ("mf_" + flux + "_" + names[k] + ".csv"), coarse, cm.value, cm.count);
        }
        mf_json[flux] = {{"records", recs.size()},
                         {"spread_error", correlation_json(spread, abs_err)},
                         {"cv_vs_relative_error", correlation_json(cv, rel_err)}};
    }

    // Training curves of every member, long format.
    std::string curves = "seed,epoch,train_loss,val_loss,nmae,mse,acc,iou,r2\n";
    for (const auto& c : idx.checkpoints) {
        const fs::path ck = idx.resolve(c);
        const Checkpoint header = load_checkpoint(ck);
        const std::string text = read_text(epoch_log_path(ck));
        std::size_t pos = text.find('\n');
        while (pos != std::string::npos && pos + 1 < text.size()) {
            const std::size_t next = text.find('\n', pos + 1);
            curves += std::to_string(header.params.seed) + "," + text.substr(pos + 1, next - pos);
            pos = next;
        }
    }
    write_text(out_dir / "training_curves.csv", curves);

    const MetricReport mlog = acc_log.report(), mlin = acc_lin.report(), mbase = acc_base.report();
    nlohmann::json summary = {
        {"format", "fpuq-analysis"},
        {"config_hash", hex_hash(cfg.hash())},
        {"split", idx.split},
        {"releases", n},
        {"members", idx.n_members},
        {"patch_cells", cells},
        {"active_tau", tau},
        {"active_tau_log", tau_log},
        {"eps_log", eps_log},
        {"test_metrics",
         {{"log", mlog.to_json()}, {"linear", mlin.to_json()}, {"constant_mean_baseline_log", mbase.to_json()}}},
        {"spread_error",
         {{"maps_std_vs_abs_mean_error", correlation_json(agg.field(AggStat::stddev), abs_mean_err)},
          {"maps_std_vs_mean_abs_error", correlation_json(agg.field(AggStat::stddev), agg.field(AggStat::abs_error))},
          {"molefrac", mf_json}}},
        {"wind_rose", {{"releases", rose.total()}, {"calm", rose.calm}}},
        {"definitions",
         {{"nmae", "sum|pred-truth| / max(sum|truth|, 1e-12)"},
          {"accuracy", "fraction of cells with matching active/inactive label at active_tau"},
          {"iou", "active-cell intersection over union at active_tau; 1 when both empty"},
          {"metric_cells", "patch window of each test release; ensemble mean vs LPDM truth"},
          {"log_space", "t = ln(s + eps_log)"},
          {"std", "population (1/N)"},
          {"cv", "std / (mean + eps)"},
          {"cv_rose_stat", "per-footprint CV of patch-summed member predictions, by surface wind sector"},
          {"quantile_map", "one global map per model, fitted in log space on validation predictions"},
          {"molefrac_maps", "per coarse cell mean of record statistics at the release location"},
          {"relative_error", "|mean - truth| / truth"}}}};
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

void stage_report(const PipelineConfig& cfg, const fs::path& analysis_dir, const fs::path& out_dir) {
    const fs::path summary_path = analysis_dir / "summary.json";
    nlohmann::json s;
    try {
        s = nlohmann::json::parse(read_text(summary_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(summary_path.string() + ": " + e.what());
    }
    auto num = [](const nlohmann::json& j) { return j.is_null() ? std::string("n/a") : csv_number(j.get<double>()); };
    const auto& tm = s.at("test_metrics");
    const auto& se = s.at("spread_error");
    std::string md;
    md += "# Footprint emulator ensemble report\n\n";
    md += "config hash: " + hex_hash(cfg.hash()) + "\n\n";
    md += "## Test-set ensemble mean (" + std::to_string(s.at("releases").get<std::size_t>()) + " releases, " +
          std::to_string(s.at("members").get<std::size_t>()) + " members)\n\n";
    md += "| space | R2 | IoU | accuracy | NMAE | MSE |\n|---|---|---|---|---|---|\n";
    for (const char* space : {"log", "linear", "constant_mean_baseline_log"}) {
        const auto& r = tm.at(space);
        md += std::string("| ") + space + " | " + num(r.at("r2")) + " | " + num(r.at("iou")) + " | " + num(r.at("accuracy")) +
              " | " + num(r.at("nmae")) + " | " + num(r.at("mse")) + " |\n";
    }
    md += "\nactive_tau = " + num(s.at("active_tau")) + " (linear), " + num(s.at("active_tau_log")) + " (log)\n\n";
    md += "## Spread-error rank correlation (Spearman)\n\n";
    md += "- per-cell std vs |mean error|: " + num(se.at("maps_std_vs_abs_mean_error").at("rho")) + "\n";
    md += "- per-cell std vs mean |error|: " + num(se.at("maps_std_vs_mean_abs_error").at("rho")) + "\n";
    for (const auto& [flux, v] : se.at("molefrac").items())
        md += "- mole fraction, " + flux + " flux: " + num(v.at("spread_error").at("rho")) +
              " (cv vs relative error: " + num(v.at("cv_vs_relative_error").at("rho")) + ")\n";
    md += "\n## Products\n\n";
    md += "maps: map_{truth,mean,std,cv,error,abs_error}.csv; roses: wind_rose.csv, cv_rose.csv; series: "
          "cv_series_*.csv; mole-fraction maps: mf_<flux>_<stat>.csv; training_curves.csv\n";
    write_text(out_dir / "report.md", md);
    nlohmann::json r = {{"format", "fpuq-report"}, {"config_hash", hex_hash(cfg.hash())}, {"summary", s}};
    write_text(out_dir / "report.json", r.dump(2) + "\n");
}

nlohmann::json BenchReport::to_json() const {
    return {{"format", "fpuq-bench"},
            {"n", n},
            {"oracle_median_s", oracle_median_s},
            {"emulator_median_s", emulator_median_s},
            {"ratio", ratio()},
            {"emulator_scope", "feature extraction + normalization + forward + post-processing, one member"},
            {"production_reference", {{"oracle_s", 1200.0}, {"emulator_s", 0.75}, {"reported_speedup", 1000.0}}}};
}

BenchReport bench(const PipelineConfig& cfg, const fs::path& manifest, const fs::path& ckpt, std::size_t n, const fs::path& met_file) {
    if (n < 10) throw ValidationError("bench: n must be >= 10, got " + std::to_string(n));
    const DatasetManifest m = DatasetManifest::load(manifest);
    std::vector<Release> releases;
    for (const auto* split : {&m.test, &m.validation, &m.train})
        for (const auto& e : *split) releases.push_back(e.release);
    if (releases.empty()) throw ValidationError("bench: manifest has no releases");
    const MetField met = met_for(cfg, met_file);
    const EnsembleMember member = load_member(ckpt);
    const auto& hp = member.checkpoint.params.hp;
    const Graph graph = Graph::build(hp.side, hp.mesh_spacing);

    BenchReport rep;
    rep.n = n;
    std::vector<double> oracle, emu;
    double sink = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Release& r = releases[i % releases.size()];
        auto t0 = Clock::now();
        const Footprint fp = simulate_footprint(r, met, cfg.sim);
        oracle.push_back(seconds_since(t0));
        sink += fp.sum();
        t0 = Clock::now();
        const FeatureTensor x = extract_features(r, met, cfg.features, hp.side);
        const auto p = member_patch(member, x, graph);
        emu.push_back(seconds_since(t0));
        sink += p.front();
    }
    if (!std::isfinite(sink)) throw std::runtime_error("bench: non-finite output");
    rep.oracle_median_s = median(oracle);
    rep.emulator_median_s = median(emu);
    return rep;
}

void reproduce(const PipelineConfig& cfg, const fs::path& out, unsigned jobs, bool verbose) {
    const RunLayout L{out, cfg.paths};
    fs::create_directories(out);
    write_text(out / "config.json", cfg.to_json().dump(2) + "\n");
    auto log = [&](const std::string& stage, Clock::time_point t0) {
        if (verbose) std::cerr << "[reproduce] " << stage << " done in " << csv_number(std::round(seconds_since(t0) * 10) / 10) << " s\n";
    };
    auto t0 = Clock::now();
    stage_gen_met(cfg, L.met());
    log("gen-met", t0);
    t0 = Clock::now();
    stage_gen_data(cfg, L.dataset(), L.met());
    log("gen-data", t0);
    t0 = Clock::now();
    std::vector<fs::path> ckpts;
    for (auto s : cfg.ensemble.seeds) ckpts.push_back(L.checkpoint(s));
    stage_train(cfg, L.manifest(), cfg.ensemble.seeds, ckpts, jobs);
    log("train", t0);
    t0 = Clock::now();
    stage_ensemble(cfg, ckpts, L.manifest(), L.ensemble());
    log("ensemble", t0);
    t0 = Clock::now();
    stage_molefrac(cfg, L.manifest(), L.ensemble_index(), L.molefrac());
    log("molefrac", t0);
    t0 = Clock::now();
    stage_analyze(cfg, L.manifest(), L.ensemble_index(), L.molefrac_csv(), L.analysis(), L.met());
    log("analyze", t0);
    stage_report(cfg, L.analysis(), L.report());
}

}  // namespace fpuq
