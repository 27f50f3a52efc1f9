#include <doctest.h>

#include <filesystem>

#include "fpuq/common.hpp"
#include "fpuq/config.hpp"

using namespace fpuq;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
    try {
        config_from_json_text(text, "cfg.json");
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

fs::path default_config() { return fs::path(FPUQ_SOURCE_DIR) / "configs" / "default.json"; }

}  // namespace

TEST_CASE("empty object gives the defaults") {
    const PipelineConfig c = config_from_json_text("{}");
    CHECK(c.grid.n_lat == 64);
    CHECK(c.model.in_channels == 47);
    CHECK(c.model.side == 50);
    CHECK_FALSE(c.postprocess.tau.has_value());
    CHECK(c.ensemble.seeds.size() == 4);
    CHECK(c.hash() == PipelineConfig{}.hash());
}

TEST_CASE("shipped default config equals the built-in defaults") {
    const PipelineConfig c = load_config(default_config());
    CHECK(c.to_json() == PipelineConfig{}.to_json());
    CHECK(c.hash() == PipelineConfig{}.hash());
}

TEST_CASE("to_json round trips and the hash is stable") {
    PipelineConfig c;
    c.sim.n_particles = 123;
    c.postprocess.tau = 0.25;
    c.ensemble.cv_space = CvSpace::log;
    c.features.statics.push_back(StaticChannel::land_mask);
    c.model.in_channels = c.features.channels();
    const PipelineConfig back = config_from_json_text(c.to_json().dump(2));
    CHECK(back.to_json() == c.to_json());
    CHECK(back.hash() == c.hash());
    CHECK(back.model.in_channels == 48);
    CHECK(c.hash() != PipelineConfig{}.hash());
    CHECK(hex_hash(0x1a) == "000000000000001a");
    CHECK(hex_hash(c.hash()).size() == 16);
}

TEST_CASE("unknown keys are rejected with a line number and key path") {
    const std::string msg = error_of("{\n  \"sim\": {\n    \"dt\": 600,\n    \"n_partcles\": 10\n  }\n}");
    CHECK(msg.find("cfg.json:4:") != std::string::npos);
    CHECK(msg.find("sim.n_partcles") != std::string::npos);
    CHECK(error_of("{\"gird\": {}}").find("unknown section") != std::string::npos);
}

TEST_CASE("type and range errors name the key") {
    CHECK(error_of("{\"sim\": {\"n_particles\": -5}}").find("sim.n_particles") != std::string::npos);
    CHECK(error_of("{\"train\": {\"learning_rate\": \"fast\"}}").find("train.learning_rate") != std::string::npos);
    CHECK(error_of("{\"model\": {\"activation\": \"tanh\"}}").find("model.activation") != std::string::npos);
    CHECK(error_of("{\"ensemble\": {\"seeds\": [1]}}").find("ensemble") != std::string::npos);
    CHECK(error_of("{\"ensemble\": {\"seeds\": [1, 1]}}").find("distinct") != std::string::npos);
    CHECK(error_of("{\"dataset\": {\"t_start\": 10, \"t_end\": 5}}").find("dataset") != std::string::npos);
    CHECK(error_of("{\"features\": {\"statics\": [\"humidity\"]}}").find("features.statics") != std::string::npos);
    CHECK(error_of("{\"postprocess\": {\"tau\": -1}}").find("postprocess") != std::string::npos);
    CHECK_FALSE(error_of("[1, 2]").empty());
}

TEST_CASE("syntax errors report a line") {
    const std::string msg = error_of("{\n\"sim\": {\n\"dt\": ,\n}}");
    CHECK(msg.find("cfg.json:3:") != std::string::npos);
    CHECK(msg.find("syntax") != std::string::npos);
}

TEST_CASE("missing config file is a validation error") {
    CHECK_THROWS_AS(load_config("/nonexistent/fpuq.json"), ValidationError);
}

TEST_CASE("met range covers releases, backward integration and lags") {
    const PipelineConfig c;
    const TimeRange r = c.met_range();
    CHECK(r.start <= c.dataset.t_start - c.sim.t_back_h);
    CHECK(r.start <= c.dataset.t_start - 12.0);
    CHECK(r.end >= c.dataset.t_end);
}
