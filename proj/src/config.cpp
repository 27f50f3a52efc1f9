#include "fpuq/config.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <set>

#include "fpuq/common.hpp"

namespace fpuq {

using nlohmann::json;

void DatasetConfig::validate() const {
    if (!std::isfinite(t_start) || !std::isfinite(t_end) || !(t_end > t_start))
        throw ValidationError("dataset: need t_start < t_end");
    if (!(altitude >= 0.0) || !std::isfinite(altitude)) throw ValidationError("dataset.altitude must be >= 0");
    if (splits.train < 2 || splits.validation < 1 || splits.test < 1)
        throw ValidationError("dataset.splits: need train >= 2, validation >= 1, test >= 1");
    if (patch_side < 2) throw ValidationError("dataset.patch_side must be >= 2");
}

void EnsembleConfig::validate() const {
    if (seeds.size() < 2) throw ValidationError("ensemble.seeds needs at least two seeds");
    std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
    if (unique.size() != seeds.size()) throw ValidationError("ensemble.seeds must be distinct");
}

void PipelineConfig::validate() const {
    grid.validate();
    met.validate();
    sim.validate();
    dataset.validate();
    features.validate();
    model.validate();
    if (model.in_channels != features.channels()) throw ValidationError("model.in_channels must equal the feature channel count");
    if (model.side != dataset.patch_side) throw ValidationError("model side must equal dataset.patch_side");
    train.validate();
    ensemble.validate();
    postprocess.validate();
    flux.validate();
    if (analysis.coarse_factor < 1) throw ValidationError("analysis.coarse_factor must be >= 1");
}

TimeRange PipelineConfig::met_range() const {
    double max_lag = 0.0;
    for (double l : features.lags_h) max_lag = std::max(max_lag, std::abs(l));
    const double start = std::min(0.0, dataset.t_start - std::max(sim.t_back_h, max_lag) - met.time_step_h);
    return {start, dataset.t_end + met.time_step_h};
}

json PipelineConfig::to_json() const {
    std::vector<std::string> statics;
    for (auto s : features.statics) statics.push_back(static_channel_name(s));
    json tau = postprocess.tau ? json(*postprocess.tau) : json(nullptr);
    return {
        {"grid", grid_to_json(grid)},
        {"met",
         {{"seed", met.seed},
          {"base_zonal", met.base_zonal},
          {"perturbation_amplitude", met.perturbation_amplitude},
          {"n_modes", met.n_modes},
          {"period_h", met.period_h},
          {"shear_exponent", met.shear_exponent},
          {"z_ref", met.z_ref},
          {"time_step_h", met.time_step_h},
          {"max_wind", met.max_wind},
          {"levels", met.levels}}},
        {"sim",
         {{"n_particles", sim.n_particles},
          {"dt", sim.dt},
          {"t_back_h", sim.t_back_h},
          {"k_h", sim.k_h},
          {"sigma_w", sim.sigma_w},
          {"h_surf", sim.h_surf},
          {"h_top", sim.h_top},
          {"seed", sim.seed}}},
        {"dataset",
         {{"seed", dataset.seed},
          {"t_start", dataset.t_start},
          {"t_end", dataset.t_end},
          {"altitude", dataset.altitude},
          {"patch_side", dataset.patch_side},
          {"splits", {{"train", dataset.splits.train}, {"validation", dataset.splits.validation}, {"test", dataset.splits.test}}}}},
        {"features", {{"levels", features.levels}, {"lags_h", features.lags_h}, {"statics", statics}}},
        {"model",
         {{"latent", model.latent},
          {"rounds", model.rounds},
          {"activation", model.activation == Activation::relu ? "relu" : "identity"},
          {"mesh_spacing", model.mesh_spacing}}},
        {"train",
         {{"epochs", train.epochs},
          {"batch_size", train.batch_size},
          {"learning_rate", train.learning_rate},
          {"beta1", train.beta1},
          {"beta2", train.beta2},
          {"adam_eps", train.adam_eps},
          {"shuffle_seed", train.shuffle_seed}}},
        {"ensemble", {{"seeds", ensemble.seeds}, {"cv_space", ensemble.cv_space == CvSpace::linear ? "linear" : "log"}}},
        {"postprocess", {{"eps_log", postprocess.eps_log}, {"tau", tau}, {"n_q", postprocess.n_q}, {"eps_cv", postprocess.eps_cv}}},
        {"flux",
         {{"seed", flux.seed},
          {"n_hotspots", flux.n_hotspots},
          {"background", flux.background},
          {"sigma_min_cells", flux.sigma_min_cells},
          {"sigma_max_cells", flux.sigma_max_cells},
          {"log_amp_mean", flux.log_amp_mean},
          {"log_amp_sd", flux.log_amp_sd}}},
        {"analysis", {{"coarse_factor", analysis.coarse_factor}}},
        {"paths",
         {{"met", paths.met},
          {"dataset", paths.dataset},
          {"models", paths.models},
          {"ensemble", paths.ensemble},
          {"molefrac", paths.molefrac},
          {"analysis", paths.analysis},
          {"report", paths.report}}},
    };
}

std::uint64_t PipelineConfig::hash() const { return fnv1a64(to_json().dump()); }

std::string hex_hash(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

namespace {

// Walks the parsed document section by section, locating keys in the source
// text so messages can name a line.
class Reader {
public:
    Reader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

    [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& msg) const {
        std::string joined;
        for (const auto& p : path) joined += (joined.empty() ? "" : ".") + p;
        throw ValidationError(source_ + ":" + std::to_string(line_of(path)) + ": " + joined + ": " + msg);
    }

    std::size_t line_of(const std::vector<std::string>& path) const {
        std::size_t pos = 0;
        for (const auto& key : path) {
            const auto found = text_.find("\"" + key + "\"", pos);
            if (found == std::string::npos) break;
            pos = found;
        }
        return static_cast<std::size_t>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(pos), '\n')) + 1;
    }

    const json* section(const json& root, const std::string& name, const std::set<std::string>& keys) const {
        if (!root.contains(name)) return nullptr;
        const json& s = root.at(name);
        if (!s.is_object()) fail({name}, "expected an object");
        for (auto it = s.begin(); it != s.end(); ++it)
            if (!keys.count(it.key())) fail({name, it.key()}, "unknown key");
        return &s;
    }

    void number(const json* s, std::vector<std::string> path, double& out) const {
        if (!s || !s->contains(path.back())) return;
        const json& v = s->at(path.back());
        if (!v.is_number()) fail(path, "expected a number");
        out = v.get<double>();
        if (!std::isfinite(out)) fail(path, "expected a finite number");
    }

    template <typename U>
    void count(const json* s, std::vector<std::string> path, U& out) const {
        if (!s || !s->contains(path.back())) return;
        const json& v = s->at(path.back());
        if (!v.is_number_unsigned()) fail(path, "expected a non-negative integer");
        out = static_cast<U>(v.get<std::uint64_t>());
    }

    void string(const json* s, std::vector<std::string> path, std::string& out) const {
        if (!s || !s->contains(path.back())) return;
        const json& v = s->at(path.back());
        if (!v.is_string()) fail(path, "expected a string");
        out = v.get<std::string>();
        if (out.empty()) fail(path, "must not be empty");
    }

    void numbers(const json* s, std::vector<std::string> path, std::vector<double>& out) const {
        if (!s || !s->contains(path.back())) return;
        const json& v = s->at(path.back());
        if (!v.is_array()) fail(path, "expected an array of numbers");
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number()) fail(path, "expected an array of numbers");
            out.push_back(e.get<double>());
        }
    }

    // Runs a section's own validation and attributes failures to the section line.
    template <typename F>
    void checked(const std::string& name, F&& fn) const {
        try {
            fn();
        } catch (const ValidationError& e) {
            fail({name}, e.what());
        }
    }

private:
    const std::string& text_;
    std::string source_;
};

}  // namespace

PipelineConfig config_from_json_text(const std::string& text, const std::string& source) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
        const auto line = std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n') + 1;
        throw ValidationError(source + ":" + std::to_string(line) + ": JSON syntax error: " + e.what());
    }
    Reader rd(text, source);
    if (!root.is_object()) throw ValidationError(source + ":1: top level must be an object");
    static const std::set<std::string> sections = {"grid",     "met",         "sim",  "dataset",  "features", "model", "train",
                                                   "ensemble", "postprocess", "flux", "analysis", "paths"};
    for (auto it = root.begin(); it != root.end(); ++it)
        if (!sections.count(it.key())) rd.fail({it.key()}, "unknown section");

    PipelineConfig c;
    if (const json* s = rd.section(root, "grid", {"n_lat", "n_lon", "lat0", "lon0", "d_lat", "d_lon"})) {
        rd.count(s, {"grid", "n_lat"}, c.grid.n_lat);
        rd.count(s, {"grid", "n_lon"}, c.grid.n_lon);
        rd.number(s, {"grid", "lat0"}, c.grid.lat0);
        rd.number(s, {"grid", "lon0"}, c.grid.lon0);
        rd.number(s, {"grid", "d_lat"}, c.grid.d_lat);
        rd.number(s, {"grid", "d_lon"}, c.grid.d_lon);
    }
    rd.checked("grid", [&] { c.grid.validate(); });

    if (const json* s = rd.section(root, "met",
                                   {"seed", "base_zonal", "perturbation_amplitude", "n_modes", "period_h", "shear_exponent",
                                    "z_ref", "time_step_h", "max_wind", "levels"})) {
        rd.count(s, {"met", "seed"}, c.met.seed);
        rd.number(s, {"met", "base_zonal"}, c.met.base_zonal);
        rd.number(s, {"met", "perturbation_amplitude"}, c.met.perturbation_amplitude);
        rd.count(s, {"met", "n_modes"}, c.met.n_modes);
        rd.number(s, {"met", "period_h"}, c.met.period_h);
        rd.number(s, {"met", "shear_exponent"}, c.met.shear_exponent);
        rd.number(s, {"met", "z_ref"}, c.met.z_ref);
        rd.number(s, {"met", "time_step_h"}, c.met.time_step_h);
        rd.number(s, {"met", "max_wind"}, c.met.max_wind);
        rd.numbers(s, {"met", "levels"}, c.met.levels);
    }
    rd.checked("met", [&] { c.met.validate(); });

    if (const json* s = rd.section(root, "sim", {"n_particles", "dt", "t_back_h", "k_h", "sigma_w", "h_surf", "h_top", "seed"})) {
        rd.count(s, {"sim", "n_particles"}, c.sim.n_particles);
        rd.number(s, {"sim", "dt"}, c.sim.dt);
        rd.number(s, {"sim", "t_back_h"}, c.sim.t_back_h);
        rd.number(s, {"sim", "k_h"}, c.sim.k_h);
        rd.number(s, {"sim", "sigma_w"}, c.sim.sigma_w);
        rd.number(s, {"sim", "h_surf"}, c.sim.h_surf);
        rd.number(s, {"sim", "h_top"}, c.sim.h_top);
        rd.count(s, {"sim", "seed"}, c.sim.seed);
    }
    rd.checked("sim", [&] { c.sim.validate(); });

    if (const json* s = rd.section(root, "dataset", {"seed", "t_start", "t_end", "altitude", "patch_side", "splits"})) {
        rd.count(s, {"dataset", "seed"}, c.dataset.seed);
        rd.number(s, {"dataset", "t_start"}, c.dataset.t_start);
        rd.number(s, {"dataset", "t_end"}, c.dataset.t_end);
        rd.number(s, {"dataset", "altitude"}, c.dataset.altitude);
        rd.count(s, {"dataset", "patch_side"}, c.dataset.patch_side);
        if (const json* sp = rd.section(*s, "splits", {"train", "validation", "test"})) {
            rd.count(sp, {"dataset", "splits", "train"}, c.dataset.splits.train);
            rd.count(sp, {"dataset", "splits", "validation"}, c.dataset.splits.validation);
            rd.count(sp, {"dataset", "splits", "test"}, c.dataset.splits.test);
        }
    }
    rd.checked("dataset", [&] { c.dataset.validate(); });

    if (const json* s = rd.section(root, "features", {"levels", "lags_h", "statics"})) {
        rd.numbers(s, {"features", "levels"}, c.features.levels);
        rd.numbers(s, {"features", "lags_h"}, c.features.lags_h);
        if (s->contains("statics")) {
            const json& v = s->at("statics");
            if (!v.is_array()) rd.fail({"features", "statics"}, "expected an array of channel names");
            c.features.statics.clear();
            for (const auto& e : v) {
                if (!e.is_string()) rd.fail({"features", "statics"}, "expected an array of channel names");
                try {
                    c.features.statics.push_back(static_channel_from_name(e.get<std::string>()));
                } catch (const ValidationError& err) {
                    rd.fail({"features", "statics"}, err.what());
                }
            }
        }
    }
    rd.checked("features", [&] { c.features.validate(); });

    c.model.in_channels = c.features.channels();
    c.model.side = c.dataset.patch_side;
    if (const json* s = rd.section(root, "model", {"latent", "rounds", "activation", "mesh_spacing"})) {
        rd.count(s, {"model", "latent"}, c.model.latent);
        rd.count(s, {"model", "rounds"}, c.model.rounds);
        rd.number(s, {"model", "mesh_spacing"}, c.model.mesh_spacing);
        std::string act = "relu";
        rd.string(s, {"model", "activation"}, act);
        if (act == "relu")
            c.model.activation = Activation::relu;
        else if (act == "identity")
            c.model.activation = Activation::identity;
        else
            rd.fail({"model", "activation"}, "expected \"relu\" or \"identity\"");
    }
    rd.checked("model", [&] {
        c.model.validate();
        build_mesh(c.model.side, c.model.mesh_spacing);
    });

    if (const json* s = rd.section(root, "train",
                                   {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps", "shuffle_seed"})) {
        rd.count(s, {"train", "epochs"}, c.train.epochs);
        rd.count(s, {"train", "batch_size"}, c.train.batch_size);
        rd.number(s, {"train", "learning_rate"}, c.train.learning_rate);
        rd.number(s, {"train", "beta1"}, c.train.beta1);
        rd.number(s, {"train", "beta2"}, c.train.beta2);
        rd.number(s, {"train", "adam_eps"}, c.train.adam_eps);
        rd.count(s, {"train", "shuffle_seed"}, c.train.shuffle_seed);
    }
    rd.checked("train", [&] { c.train.validate(); });

    if (const json* s = rd.section(root, "ensemble", {"seeds", "cv_space"})) {
        if (s->contains("seeds")) {
            const json& v = s->at("seeds");
            if (!v.is_array()) rd.fail({"ensemble", "seeds"}, "expected an array of non-negative integers");
            c.ensemble.seeds.clear();
            for (const auto& e : v) {
                if (!e.is_number_unsigned()) rd.fail({"ensemble", "seeds"}, "expected an array of non-negative integers");
                c.ensemble.seeds.push_back(e.get<std::uint64_t>());
            }
        }
        std::string space = "linear";
        rd.string(s, {"ensemble", "cv_space"}, space);
        if (space == "linear")
            c.ensemble.cv_space = CvSpace::linear;
        else if (space == "log")
            c.ensemble.cv_space = CvSpace::log;
        else
            rd.fail({"ensemble", "cv_space"}, "expected \"linear\" or \"log\"");
    }
    rd.checked("ensemble", [&] { c.ensemble.validate(); });

    if (const json* s = rd.section(root, "postprocess", {"eps_log", "tau", "n_q", "eps_cv"})) {
        rd.number(s, {"postprocess", "eps_log"}, c.postprocess.eps_log);
        if (s->contains("tau") && !s->at("tau").is_null()) {
            double tau = 0.0;
            rd.number(s, {"postprocess", "tau"}, tau);
            c.postprocess.tau = tau;
        }
        rd.count(s, {"postprocess", "n_q"}, c.postprocess.n_q);
        rd.number(s, {"postprocess", "eps_cv"}, c.postprocess.eps_cv);
    }
    rd.checked("postprocess", [&] { c.postprocess.validate(); });

    if (const json* s = rd.section(root, "flux",
                                   {"seed", "n_hotspots", "background", "sigma_min_cells", "sigma_max_cells", "log_amp_mean",
                                    "log_amp_sd"})) {
        rd.count(s, {"flux", "seed"}, c.flux.seed);
        rd.count(s, {"flux", "n_hotspots"}, c.flux.n_hotspots);
        rd.number(s, {"flux", "background"}, c.flux.background);
        rd.number(s, {"flux", "sigma_min_cells"}, c.flux.sigma_min_cells);
        rd.number(s, {"flux", "sigma_max_cells"}, c.flux.sigma_max_cells);
        rd.number(s, {"flux", "log_amp_mean"}, c.flux.log_amp_mean);
        rd.number(s, {"flux", "log_amp_sd"}, c.flux.log_amp_sd);
    }
    rd.checked("flux", [&] { c.flux.validate(); });

    if (const json* s = rd.section(root, "analysis", {"coarse_factor"})) rd.count(s, {"analysis", "coarse_factor"}, c.analysis.coarse_factor);

    if (const json* s = rd.section(root, "paths", {"met", "dataset", "models", "ensemble", "molefrac", "analysis", "report"})) {
        rd.string(s, {"paths", "met"}, c.paths.met);
        rd.string(s, {"paths", "dataset"}, c.paths.dataset);
        rd.string(s, {"paths", "models"}, c.paths.models);
        rd.string(s, {"paths", "ensemble"}, c.paths.ensemble);
        rd.string(s, {"paths", "molefrac"}, c.paths.molefrac);
        rd.string(s, {"paths", "analysis"}, c.paths.analysis);
        rd.string(s, {"paths", "report"}, c.paths.report);
    }
    try {
        c.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ValidationError("config file not found: " + path.string());
    return config_from_json_text(read_text(path), path.string());
}

}  // namespace fpuq
