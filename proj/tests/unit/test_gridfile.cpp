#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "fpuq/common.hpp"
#include "fpuq/gridfile.hpp"

using namespace fpuq;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const char* name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("byte layout of the header and release block") {
    const GridSpec g{2, 3, -20.0, -60.0, 0.3, 0.3};
    const Release r{7, -19.7, -59.4, 50.0, 99.5};
    const Footprint fp(g, r, {1, 2, 3, 4, 5, 6}, Space::linear);
    const auto path = tmp("fpuq_test_layout.fpg");
    write_grid_file(path, GridFile::from_footprint(fp, 0x1122334455667788ULL));
    const auto b = read_file(path);
    REQUIRE(b.size() == 104 + 6 * 8);

    auto u32 = [&](std::size_t off) { std::uint32_t v; std::memcpy(&v, b.data() + off, 4); return v; };
    auto u64 = [&](std::size_t off) { std::uint64_t v; std::memcpy(&v, b.data() + off, 8); return v; };
    auto f64 = [&](std::size_t off) { double v; std::memcpy(&v, b.data() + off, 8); return v; };
    CHECK(u32(4) == 1);
    CHECK(u32(8) == 2);
    CHECK(u32(12) == 3);
    CHECK(b[16] == 0);
    CHECK(f64(24) == -20.0);
    CHECK(f64(32) == -60.0);
    CHECK(f64(40) == 0.3);
    CHECK(f64(48) == 0.3);
    CHECK(u64(56) == 0x1122334455667788ULL);
    CHECK(u64(64) == 7);
    CHECK(f64(72) == r.lat);
    CHECK(f64(80) == r.lon);
    CHECK(f64(88) == 50.0);
    CHECK(f64(96) == 99.5);
    CHECK(f64(104) == 1.0);
    CHECK(f64(104 + 5 * 8) == 6.0);
    fs::remove(path);
}

TEST_CASE("log-space footprints keep their space flag") {
    const GridSpec g{1, 2, 0.0, 0.0, 1.0, 1.0};
    const Footprint fp(g, {}, {-20.7, -1.5}, Space::log);
    const auto path = tmp("fpuq_test_log.fpg");
    write_grid_file(path, GridFile::from_footprint(fp));
    const Footprint back = read_grid_file(path).to_footprint();
    CHECK(back.space() == Space::log);
    CHECK(back.values() == fp.values());
    fs::remove(path);
}

TEST_CASE("flux fields use a zeroed release block") {
    FluxField f{GridSpec{2, 2, 0.0, 0.0, 1.0, 1.0}, {0.0, 1.5, 2.0, 3.0}};
    const auto path = tmp("fpuq_test_flux.fpg");
    write_grid_file(path, GridFile::from_flux(f));
    const GridFile gf = read_grid_file(path);
    CHECK(gf.release == Release{});
    CHECK(gf.to_flux().values == f.values);

    FluxField bad = f;
    bad.values[1] = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    fs::remove(path);
}

TEST_CASE("invalid files are rejected with the path") {
    const auto path = tmp("fpuq_test_bad.fpg");
    write_text(path, "FPG1");
    try {
        read_grid_file(path);
        FAIL("truncated file accepted");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find(path.string()) != std::string::npos);
    }
    GridFile gf;
    gf.grid = GridSpec{2, 2, 0.0, 0.0, 1.0, 1.0};
    gf.values = {1.0};
    CHECK_THROWS_AS(write_grid_file(path, gf), ValidationError);
    fs::remove(path);
}
