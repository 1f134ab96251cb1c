#include <doctest.h>

#include <png.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "metamorph/pipeline.hpp"
#include "metamorph/synthetic.hpp"
#include "testsupport.hpp"

using namespace metamorph;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per test case, removed on destruction.
struct ScratchDir {
    fs::path root;

    explicit ScratchDir(const std::string& name) : root(fs::path("scratch") / name) {
        fs::remove_all(root);
        fs::create_directories(root);
    }

    ~ScratchDir() { fs::remove_all(root); }

    std::string file(const std::string& name) const { return (root / name).string(); }
};

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

void write_gray_png(const std::string& path, int w, int h,
                    const std::vector<unsigned char>& px) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = PNG_FORMAT_GRAY;
    REQUIRE(png_image_write_to_file(&img, path.c_str(), 0, px.data(), 0, nullptr) != 0);
}

void write_rgb_png(const std::string& path, int w, int h,
                   const std::vector<unsigned char>& px) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = PNG_FORMAT_RGB;
    REQUIRE(png_image_write_to_file(&img, path.c_str(), 0, px.data(), 0, nullptr) != 0);
}

JobConfig quick_config() {
    JobConfig cfg;
    cfg.settings.max_outer = 8;
    cfg.settings.registration.max_iterations = 60;
    return cfg;
}

} // namespace

TEST_CASE("pgm byte values map to fractions of 255") {
    ScratchDir sd("pgm_values");
    const std::string path = sd.file("tiny.pgm");
    const unsigned char bytes[] = {0, 85, 170, 255};
    std::ofstream out(path, std::ios::binary);
    out << "P5\n2 2\n255\n";
    out.write(reinterpret_cast<const char*>(bytes), 4);
    out.close();

    const ImageGrid img = load_image(path);
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.values[0] == doctest::Approx(0.0));
    CHECK(img.values[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(img.values[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(img.values[3] == doctest::Approx(1.0));
}

TEST_CASE("pgm save clamps and rounds half away from zero") {
    ScratchDir sd("pgm_clamp");
    ImageGrid img = make_image(2, 2);
    img.values = {-0.1, 1.3, 0.5, 0.25};
    const std::string path = sd.file("clamp.pgm");
    save_image(img, path);
    const std::string bytes = read_bytes(path);
    const size_t n = bytes.size();
    REQUIRE(n >= 4);
    CHECK(static_cast<unsigned char>(bytes[n - 4]) == 0);
    CHECK(static_cast<unsigned char>(bytes[n - 3]) == 255);
    CHECK(static_cast<unsigned char>(bytes[n - 2]) == 128);
    CHECK(static_cast<unsigned char>(bytes[n - 1]) == 64);
}

TEST_CASE("pgm round trip is idempotent") {
    ScratchDir sd("pgm_roundtrip");
    testsupport::SplitMix64 rng(301);
    const ImageGrid img = testsupport::random_image(11, 7, rng, -0.2, 1.2);
    const std::string p1 = sd.file("a.pgm");
    const std::string p2 = sd.file("b.pgm");
    save_image(img, p1);
    save_image(load_image(p1), p2);
    CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("gray png loads with intensities over 255") {
    ScratchDir sd("png_gray");
    const std::string path = sd.file("gray.png");
    write_gray_png(path, 3, 2, {0, 85, 170, 255, 10, 200});
    const ImageGrid img = load_image(path);
    CHECK(img.width == 3);
    CHECK(img.height == 2);
    CHECK(img.values[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(img.values[1] == doctest::Approx(85.0 / 255.0).epsilon(1e-9));
    CHECK(img.values[4] == doctest::Approx(10.0 / 255.0).epsilon(1e-9));
    CHECK(img.values[5] == doctest::Approx(200.0 / 255.0).epsilon(1e-9));
}

TEST_CASE("color png reduces by the 601 luma weights") {
    ScratchDir sd("png_rgb");
    const std::string path = sd.file("rgb.png");
    write_rgb_png(path, 2, 2,
                  {255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 200, 45});
    const ImageGrid img = load_image(path);
    CHECK(img.values[0] == doctest::Approx(0.299).epsilon(1e-9));
    CHECK(img.values[1] == doctest::Approx(0.587).epsilon(1e-9));
    CHECK(img.values[2] == doctest::Approx(0.114).epsilon(1e-9));
    const double luma = (0.299 * 10 + 0.587 * 200 + 0.114 * 45) / 255.0;
    CHECK(img.values[3] == doctest::Approx(luma).epsilon(1e-9));
}

TEST_CASE("image loading rejects what it cannot read") {
    ScratchDir sd("bad_images");
    CHECK_THROWS_AS(load_image(sd.file("missing.pgm")), std::runtime_error);

    const std::string ascii = sd.file("ascii.pgm");
    write_text(ascii, "P2\n2 2\n255\n0 1 2 3\n");
    CHECK_THROWS_AS(load_image(ascii), std::runtime_error);

    const std::string truncated = sd.file("short.pgm");
    write_text(truncated, "P5\n4 4\n255\nab");
    CHECK_THROWS_AS(load_image(truncated), std::runtime_error);

    const std::string deep = sd.file("deep.pgm");
    write_text(deep, "P5\n2 2\n65535\nabcdefgh");
    CHECK_THROWS_AS(load_image(deep), std::runtime_error);

    const std::string tiny = sd.file("tiny.pgm");
    write_text(tiny, std::string("P5\n1 2\n255\n") + "ab");
    CHECK_THROWS_AS(load_image(tiny), std::runtime_error);
}

TEST_CASE("job config parsing applies overrides and rejects junk") {
    ScratchDir sd("config");
    const std::string good = sd.file("good.json");
    write_text(good, R"({
  "mode": "bezier",
  "control_image_paths": ["a.pgm", "b.pgm", "c.pgm"],
  "K": 4,
  "delta": 0.05,
  "gamma": 0.001,
  "levels": 2,
  "eval_indices": [0, 2, 4],
  "output_dir": "out",
  "solver": {
    "outer_tol": 1e-5,
    "max_outer": 21,
    "cg_rel_tol": 1e-9,
    "energy_scale": 2.5,
    "registration": {"max_iterations": 123, "step_init": 0.5}
  }
})");
    const JobConfig cfg = parse_job_config(good);
    CHECK(cfg.mode == "bezier");
    CHECK(cfg.control_image_paths.size() == 3);
    CHECK(cfg.num_segments == 4);
    CHECK(cfg.delta == 0.05);
    CHECK(cfg.gamma == 0.001);
    CHECK(cfg.levels == 2);
    CHECK(cfg.eval_indices == std::vector<int>{0, 2, 4});
    CHECK(cfg.output_dir == "out");
    CHECK(cfg.settings.outer_tol == 1e-5);
    CHECK(cfg.settings.max_outer == 21);
    CHECK(cfg.settings.cg_rel_tol == 1e-9);
    CHECK(cfg.settings.energy_scale == 2.5);
    CHECK(cfg.settings.registration.max_iterations == 123);
    CHECK(cfg.settings.registration.step_init == 0.5);
    // Untouched solver fields keep their defaults.
    CHECK(cfg.settings.registration.max_backtracks == RegistrationSettings{}.max_backtracks);

    const std::string typo = sd.file("typo.json");
    write_text(typo, R"({"mode":"geodesic","control_image_paths":["a","b"],"K":2,"delta":0.05,"gamma":0.001,"detla":1})");
    CHECK_THROWS_AS(parse_job_config(typo), std::invalid_argument);

    const std::string typo2 = sd.file("typo2.json");
    write_text(typo2, R"({"mode":"geodesic","control_image_paths":["a","b"],"K":2,"delta":0.05,"gamma":0.001,"solver":{"outer_tl":1}})");
    CHECK_THROWS_AS(parse_job_config(typo2), std::invalid_argument);

    const std::string fractional_k = sd.file("fractional_k.json");
    write_text(fractional_k, R"({"mode":"geodesic","control_image_paths":["a","b"],"K":2.5,"delta":0.05,"gamma":0.001})");
    CHECK_THROWS_AS(parse_job_config(fractional_k), std::invalid_argument);

    const std::string wrong_mode_indices = sd.file("wrong_mode_indices.json");
    write_text(wrong_mode_indices, R"({"mode":"geodesic","control_image_paths":["a","b"],"K":2,"delta":0.05,"gamma":0.001,"eval_indices":[1]})");
    CHECK_THROWS_AS(parse_job_config(wrong_mode_indices), std::invalid_argument);

    const std::string bad_arity = sd.file("bad_arity.json");
    write_text(bad_arity, R"({"mode":"geodesic","control_image_paths":["a","b","c"],"K":2,"delta":0.05,"gamma":0.001})");
    CHECK_THROWS_AS(parse_job_config(bad_arity), std::invalid_argument);

    const std::string no_mode = sd.file("no_mode.json");
    write_text(no_mode, R"({"control_image_paths":["a","b"],"K":2,"delta":0.05,"gamma":0.001})");
    CHECK_THROWS(parse_job_config(no_mode));

    const std::string not_json = sd.file("not_json.json");
    write_text(not_json, "P5\n2 2\n");
    CHECK_THROWS_AS(parse_job_config(not_json), std::invalid_argument);
}

TEST_CASE("geodesic job writes frames, csv and manifest") {
    ScratchDir sd("job_geodesic");
    const ImageGrid a = gaussian_bump(17, 17, 0.4, 0.5, 0.12);
    const ImageGrid b = gaussian_bump(17, 17, 0.6, 0.5, 0.12);
    save_image(a, sd.file("a.pgm"));
    save_image(b, sd.file("b.pgm"));

    JobConfig cfg = quick_config();
    cfg.mode = "geodesic";
    cfg.control_image_paths = {sd.file("a.pgm"), sd.file("b.pgm")};
    cfg.num_segments = 3;
    cfg.delta = 0.05;
    cfg.gamma = 1e-3;
    cfg.output_dir = sd.file("out");

    REQUIRE(run_job(cfg) == 0);
    for (int k = 0; k <= 3; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "out/frame_%03d.pgm", k);
        CHECK(fs::exists(sd.file(name)));
    }
    CHECK_FALSE(fs::exists(sd.file("out/frame_004.pgm")));

    const std::string csv = read_bytes(sd.file("out/energies.csv"));
    CHECK(csv.rfind("outer_iter,k,dirichlet,laplacian,mismatch,segment_total,path_total\n", 0) ==
          0);

    const std::string manifest = read_bytes(sd.file("out/manifest.json"));
    CHECK(manifest.find("\"version\": \"0.1.0\"") != std::string::npos);
    CHECK(manifest.find("\"mode\": \"geodesic\"") != std::string::npos);
    CHECK(manifest.find("\"K\": 3") != std::string::npos);
    CHECK(manifest.find("threads") == std::string::npos);
    CHECK(manifest.find("output_dir") == std::string::npos);

    // Endpoint frames reproduce the inputs byte for byte: the endpoints are
    // carried through the solve untouched and the save is idempotent.
    CHECK(read_bytes(sd.file("out/frame_000.pgm")) == read_bytes(sd.file("a.pgm")));
    CHECK(read_bytes(sd.file("out/frame_003.pgm")) == read_bytes(sd.file("b.pgm")));
}

TEST_CASE("identical inputs give identical frames") {
    ScratchDir sd("job_constant");
    const ImageGrid u = gaussian_bump(17, 17, 0.5, 0.5, 0.13);
    save_image(u, sd.file("u.pgm"));
    JobConfig cfg = quick_config();
    cfg.mode = "geodesic";
    cfg.control_image_paths = {sd.file("u.pgm"), sd.file("u.pgm")};
    cfg.num_segments = 2;
    cfg.delta = 0.05;
    cfg.gamma = 1e-3;
    cfg.output_dir = sd.file("out");
    REQUIRE(run_job(cfg) == 0);
    const std::string f0 = read_bytes(sd.file("out/frame_000.pgm"));
    CHECK(f0 == read_bytes(sd.file("out/frame_001.pgm")));
    CHECK(f0 == read_bytes(sd.file("out/frame_002.pgm")));
}

TEST_CASE("repeated runs are byte identical") {
    ScratchDir sd("job_repeat");
    const ImageGrid a = gaussian_bump(17, 17, 0.42, 0.47, 0.12);
    const ImageGrid b = gaussian_bump(17, 17, 0.58, 0.53, 0.12);
    save_image(a, sd.file("a.pgm"));
    save_image(b, sd.file("b.pgm"));
    JobConfig cfg = quick_config();
    cfg.mode = "geodesic";
    cfg.control_image_paths = {sd.file("a.pgm"), sd.file("b.pgm")};
    cfg.num_segments = 2;
    cfg.delta = 0.05;
    cfg.gamma = 1e-3;

    cfg.output_dir = sd.file("out1");
    REQUIRE(run_job(cfg) == 0);
    cfg.output_dir = sd.file("out2");
    cfg.settings.threads = 4;
    REQUIRE(run_job(cfg) == 0);

    for (const char* name : {"frame_000.pgm", "frame_001.pgm", "frame_002.pgm", "energies.csv",
                             "manifest.json"}) {
        CHECK(read_bytes(sd.file(std::string("out1/") + name)) ==
              read_bytes(sd.file(std::string("out2/") + name)));
    }
}

TEST_CASE("degree one bezier jobs match geodesic jobs byte for byte") {
    ScratchDir sd("job_bezier_lin");
    const ImageGrid a = gaussian_bump(17, 17, 0.4, 0.5, 0.12);
    const ImageGrid b = gaussian_bump(17, 17, 0.6, 0.5, 0.12);
    save_image(a, sd.file("a.pgm"));
    save_image(b, sd.file("b.pgm"));

    JobConfig cfg = quick_config();
    cfg.control_image_paths = {sd.file("a.pgm"), sd.file("b.pgm")};
    cfg.num_segments = 3;
    cfg.delta = 0.05;
    cfg.gamma = 1e-3;

    cfg.mode = "geodesic";
    cfg.output_dir = sd.file("geo");
    REQUIRE(run_job(cfg) == 0);
    cfg.mode = "bezier";
    cfg.output_dir = sd.file("bez");
    REQUIRE(run_job(cfg) == 0);

    for (int k = 0; k <= 3; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03d.pgm", k);
        CHECK(read_bytes(sd.file(std::string("geo/") + name)) ==
              read_bytes(sd.file(std::string("bez/") + name)));
    }
    CHECK(read_bytes(sd.file("geo/energies.csv")) == read_bytes(sd.file("bez/energies.csv")));
}

TEST_CASE("piecewise mode shares endpoints and numbers frames globally") {
    ScratchDir sd("job_piecewise");
    const ImageGrid a = gaussian_bump(17, 17, 0.35, 0.5, 0.12);
    const ImageGrid b = gaussian_bump(17, 17, 0.5, 0.6, 0.12);
    const ImageGrid c = gaussian_bump(17, 17, 0.65, 0.5, 0.12);
    save_image(a, sd.file("a.pgm"));
    save_image(b, sd.file("b.pgm"));
    save_image(c, sd.file("c.pgm"));

    JobConfig cfg = quick_config();
    cfg.mode = "piecewise-geodesic";
    cfg.control_image_paths = {sd.file("a.pgm"), sd.file("b.pgm"), sd.file("c.pgm")};
    cfg.num_segments = 4;
    cfg.delta = 0.05;
    cfg.gamma = 1e-3;
    cfg.output_dir = sd.file("out");
    REQUIRE(run_job(cfg) == 0);

    for (int k = 0; k <= 4; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "out/frame_%03d.pgm", k);
        CHECK(fs::exists(sd.file(name)));
    }
    CHECK_FALSE(fs::exists(sd.file("out/frame_005.pgm")));
    const std::string manifest = read_bytes(sd.file("out/manifest.json"));
    CHECK(manifest.find("\"segments_per_pair\": 2") != std::string::npos);
    // The shared middle control appears exactly once, as frame 2.
    CHECK(read_bytes(sd.file("out/frame_002.pgm")) == read_bytes(sd.file("b.pgm")));
}

TEST_CASE("energy report writes the table and no frames") {
    ScratchDir sd("job_report");
    const ImageGrid a = gaussian_bump(17, 17, 0.4, 0.5, 0.12);
    const ImageGrid b = gaussian_bump(17, 17, 0.5, 0.55, 0.12);
    const ImageGrid c = gaussian_bump(17, 17, 0.6, 0.5, 0.12);
    save_image(a, sd.file("a.pgm"));
    save_image(b, sd.file("b.pgm"));
    save_image(c, sd.file("c.pgm"));

    JobConfig cfg = quick_config();
    cfg.mode = "energy-report";
    cfg.control_image_paths = {sd.file("a.pgm"), sd.file("b.pgm"), sd.file("c.pgm")};
    cfg.num_segments = 2;
    cfg.delta = 0.05;
    cfg.gamma = 1e-3;
    cfg.output_dir = sd.file("out");
    REQUIRE(run_job(cfg) == 0);

    CHECK_FALSE(fs::exists(sd.file("out/frame_000.pgm")));
    std::istringstream csv(read_bytes(sd.file("out/energies.csv")));
    std::string line;
    REQUIRE(std::getline(csv, line)); // header
    int rows = 0;
    while (std::getline(csv, line)) {
        CHECK(line.rfind("1,", 0) == 0);
        ++rows;
    }
    CHECK(rows == 2);

    // K must match the input count in this mode.
    cfg.num_segments = 3;
    cfg.output_dir = sd.file("out_bad");
    CHECK(run_job(cfg) == 1);
    CHECK_FALSE(fs::exists(sd.file("out_bad")));
}

TEST_CASE("failing jobs clean up whatever they created") {
    ScratchDir sd("job_cleanup");
    const ImageGrid a = gaussian_bump(9, 9, 0.4, 0.5, 0.15);
    const ImageGrid b = gaussian_bump(9, 9, 0.6, 0.5, 0.15);
    save_image(a, sd.file("a.pgm"));
    save_image(b, sd.file("b.pgm"));

    SUBCASE("missing input") {
        JobConfig cfg = quick_config();
        cfg.mode = "geodesic";
        cfg.control_image_paths = {sd.file("a.pgm"), sd.file("nope.pgm")};
        cfg.num_segments = 2;
        cfg.delta = 0.05;
        cfg.gamma = 1e-3;
        cfg.output_dir = sd.file("out");
        CHECK(run_job(cfg) == 1);
        CHECK_FALSE(fs::exists(sd.file("out")));
    }

    SUBCASE("solver failure after the directory was created") {
        JobConfig cfg = quick_config();
        cfg.mode = "geodesic";
        cfg.control_image_paths = {sd.file("a.pgm"), sd.file("b.pgm")};
        cfg.num_segments = 2;
        cfg.delta = 0.05;
        cfg.gamma = 1e-3;
        cfg.settings.cg_rel_tol = 0.0; // CG cannot reach a zero residual
        cfg.output_dir = sd.file("out");
        CHECK(run_job(cfg) == 1);
        CHECK_FALSE(fs::exists(sd.file("out")));
    }

    SUBCASE("mismatched input sizes") {
        const ImageGrid small = gaussian_bump(7, 7, 0.5, 0.5, 0.15);
        save_image(small, sd.file("small.pgm"));
        JobConfig cfg = quick_config();
        cfg.mode = "geodesic";
        cfg.control_image_paths = {sd.file("a.pgm"), sd.file("small.pgm")};
        cfg.num_segments = 2;
        cfg.delta = 0.05;
        cfg.gamma = 1e-3;
        cfg.output_dir = sd.file("out");
        CHECK(run_job(cfg) == 1);
        CHECK_FALSE(fs::exists(sd.file("out")));
    }
}
