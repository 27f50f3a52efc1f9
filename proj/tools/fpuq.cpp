// fpuq: footprint emulator ensemble pipeline.
//
// Exit status: 0 success, 1 invalid input or usage, 2 runtime failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fpuq/common.hpp"
#include "fpuq/config.hpp"
#include "fpuq/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fpuq;

namespace {

PipelineConfig config_or_default(const std::string& path) {
    if (path.empty()) return PipelineConfig{};
    return load_config(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Footprint emulator ensemble: LPDM oracle, GNN emulators, uncertainty analysis"};
    app.require_subcommand(1);

    std::string config;
    std::string out;
    std::string manifest;
    std::string met;

    auto* gen_met = app.add_subcommand("gen-met", "Generate the synthetic meteorology (MET1)");
    gen_met->add_option("--config", config, "Pipeline config JSON");
    gen_met->add_option("--out", out, "Output MET1 file")->required();

    auto* gen_data = app.add_subcommand("gen-data", "Simulate LPDM footprints and features, write the dataset manifest");
    gen_data->add_option("--config", config, "Pipeline config JSON");
    gen_data->add_option("--out", out, "Output dataset directory")->required();
    gen_data->add_option("--met", met, "Existing MET1 file (regenerated from the config if omitted)");

    std::uint64_t seed = 1;
    auto* train = app.add_subcommand("train", "Train one emulator");
    train->add_option("--manifest", manifest, "Dataset manifest")->required();
    train->add_option("--seed", seed, "Model seed")->required();
    train->add_option("--config", config, "Pipeline config JSON");
    train->add_option("--out", out, "Output checkpoint (CKP1)")->required();

    std::vector<std::string> ckpts;
    std::string split = "test";
    auto* ensemble = app.add_subcommand("ensemble", "Run the ensemble and write per-release statistics");
    ensemble->add_option("--ckpts", ckpts, "Member checkpoints")->required()->expected(2, -1);
    ensemble->add_option("--manifest", manifest, "Dataset manifest")->required();
    ensemble->add_option("--config", config, "Pipeline config JSON");
    ensemble->add_option("--out", out, "Output directory")->required();
    ensemble->add_option("--split", split, "Split to predict")->check(CLI::IsMember({"train", "validation", "test"}));
    std::string cv_space;
    ensemble->add_option("--cv-space", cv_space, "CV space (overrides the config)")->check(CLI::IsMember({"linear", "log"}));

    std::string ens_index;
    auto* molefrac = app.add_subcommand("molefrac", "Convolve footprints with the flux fields");
    molefrac->add_option("--manifest", manifest, "Dataset manifest")->required();
    molefrac->add_option("--ensemble", ens_index, "Ensemble index (ensemble.json)")->required();
    molefrac->add_option("--config", config, "Pipeline config JSON");
    molefrac->add_option("--out", out, "Output directory")->required();

    std::string mf_csv;
    auto* analyze = app.add_subcommand("analyze", "Metrics, maps, roses, series and spread-error correlations");
    analyze->add_option("--manifest", manifest, "Dataset manifest")->required();
    analyze->add_option("--ensemble", ens_index, "Ensemble index (ensemble.json)")->required();
    analyze->add_option("--molefrac", mf_csv, "molefrac.csv")->required();
    analyze->add_option("--config", config, "Pipeline config JSON");
    analyze->add_option("--met", met, "Existing MET1 file");
    analyze->add_option("--out", out, "Output directory")->required();

    std::string analysis_dir;
    auto* report = app.add_subcommand("report", "Summarize analysis products");
    report->add_option("--analysis", analysis_dir, "Analysis directory")->required();
    report->add_option("--config", config, "Pipeline config JSON");
    report->add_option("--out", out, "Output directory")->required();

    std::string ckpt;
    std::size_t n = 10;
    auto* bench_cmd = app.add_subcommand("bench", "Time the LPDM oracle against one emulator member");
    bench_cmd->add_option("--manifest", manifest, "Dataset manifest")->required();
    bench_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
    bench_cmd->add_option("--config", config, "Pipeline config JSON");
    bench_cmd->add_option("--n", n, "Repetitions (>= 10)");
    bench_cmd->add_option("--met", met, "Existing MET1 file");
    bench_cmd->add_option("--out", out, "Write the timing report JSON here");

    unsigned jobs = 1;
    auto* repro = app.add_subcommand("reproduce", "Run every stage from an empty directory");
    repro->add_option("--config", config, "Pipeline config JSON")->required();
    repro->add_option("--out", out, "Run directory")->required();
    repro->add_option("--jobs", jobs, "Concurrent trainings")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 1;
    }

    try {
        const PipelineConfig cfg = config_or_default(config);
        if (*gen_met) {
            stage_gen_met(cfg, out);
        } else if (*gen_data) {
            const auto m = stage_gen_data(cfg, out, met);
            std::cout << "wrote " << m.size() << " releases (" << m.train.size() << " train, " << m.validation.size()
                      << " validation, " << m.test.size() << " test) to " << out << "\n";
        } else if (*train) {
            const auto res = stage_train(cfg, manifest, {seed}, {fs::path(out)}, 1);
            const auto& best = res.front().log[res.front().best_epoch];
            std::cout << "best epoch " << best.epoch << ": val_loss " << best.val_loss << " r2 " << best.r2 << " iou " << best.iou << "\n";
        } else if (*ensemble) {
            PipelineConfig c = cfg;
            if (!cv_space.empty()) c.ensemble.cv_space = cv_space == "log" ? CvSpace::log : CvSpace::linear;
            std::vector<fs::path> paths(ckpts.begin(), ckpts.end());
            const auto idx = stage_ensemble(c, paths, manifest, out, split);
            std::cout << "ensemble of " << idx.n_members << " over " << idx.entries.size() << " releases\n";
        } else if (*molefrac) {
            const auto recs = stage_molefrac(cfg, manifest, ens_index, out);
            std::cout << "wrote " << recs.size() << " mole-fraction records\n";
        } else if (*analyze) {
            const auto s = stage_analyze(cfg, manifest, ens_index, mf_csv, out, met);
            std::cout << s.at("test_metrics").dump(2) << "\n" << s.at("spread_error").dump(2) << "\n";
        } else if (*report) {
            stage_report(cfg, analysis_dir, out);
        } else if (*bench_cmd) {
            const auto rep = bench(cfg, manifest, ckpt, n, met);
            const auto j = rep.to_json();
            if (!out.empty()) write_text(out, j.dump(2) + "\n");
            std::cout << j.dump(2) << "\n";
        } else if (*repro) {
            reproduce(cfg, out, jobs);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
