#include "metamorph/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>

#include <png.h>

#include <json.hpp>

#include "metamorph/bezier.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace metamorph {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& reason) {
    throw std::runtime_error(path + ": " + reason);
}

// ---- PGM ----

int read_pnm_int(std::istream& in, const std::string& path, const char* what) {
    // skip whitespace and '#' comment lines
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            while (c != EOF && c != '\n') {
                c = in.get();
            }
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) {
        fail(path, std::string("malformed PGM header (expected ") + what + ")");
    }
    long value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (value > 1000000) {
            fail(path, std::string("implausible PGM ") + what);
        }
        c = in.get();
    }
    if (c != EOF) {
        in.unget();
    }
    return static_cast<int>(value);
}

ImageGrid load_pgm(std::istream& in, const std::string& path) {
    const int width = read_pnm_int(in, path, "width");
    const int height = read_pnm_int(in, path, "height");
    const int maxval = read_pnm_int(in, path, "maxval");
    if (width < 2 || height < 2) {
        fail(path, "image too small, need at least 2x2 pixels");
    }
    if (maxval != 255) {
        fail(path, "only 8-bit PGM with maxval 255 is supported, got maxval " +
                       std::to_string(maxval));
    }
    const int sep = in.get();
    if (sep == EOF || !std::isspace(sep)) {
        fail(path, "malformed PGM header (missing separator before pixel data)");
    }
    std::vector<char> bytes(static_cast<size_t>(width) * height);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        fail(path, "truncated PGM pixel data");
    }
    ImageGrid img = make_image(width, height);
    for (size_t i = 0; i < bytes.size(); ++i) {
        img.values[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
    }
    return img;
}

// ---- PNG (via libpng's simplified API) ----

ImageGrid load_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        fail(path, std::string("PNG decode failed: ") + image.message);
    }
    image.format = PNG_FORMAT_RGB;  // expands grayscale too; we reduce ourselves
    std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string reason = image.message;
        png_image_free(&image);
        fail(path, "PNG decode failed: " + reason);
    }
    const int width = static_cast<int>(image.width);
    const int height = static_cast<int>(image.height);
    if (width < 2 || height < 2) {
        fail(path, "image too small, need at least 2x2 pixels");
    }
    ImageGrid img = make_image(width, height);
    for (size_t i = 0; i < img.values.size(); ++i) {
        const unsigned char r = buffer[3 * i];
        const unsigned char g = buffer[3 * i + 1];
        const unsigned char b = buffer[3 * i + 2];
        img.values[i] = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;  // Rec. 601 luma
    }
    return img;
}

// ---- config parsing helpers ----

using nlohmann::json;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& path, const std::string& where) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* k : allowed) {
            known = known || item.key() == k;
        }
        if (!known) {
            throw std::invalid_argument(path + ": unknown key \"" + item.key() + "\" in " + where);
        }
    }
}

int get_int(const json& obj, const char* key, const std::string& path) {
    const json& v = obj.at(key);
    if (!v.is_number_integer()) {
        throw std::invalid_argument(path + ": \"" + key + "\" must be an integer");
    }
    return v.get<int>();
}

double get_double(const json& obj, const char* key, const std::string& path) {
    const json& v = obj.at(key);
    if (!v.is_number()) {
        throw std::invalid_argument(path + ": \"" + key + "\" must be a number");
    }
    return v.get<double>();
}

// ---- output writing ----

std::string frame_name(int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%03d.pgm", k);
    return buf;
}

void write_csv(const fs::path& path, const std::vector<const std::vector<OuterIterationRecord>*>& blocks) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(path.string(), "cannot open for writing");
    }
    out << "outer_iter,k,dirichlet,laplacian,mismatch,segment_total,path_total\n";
    char buf[256];
    for (const std::vector<OuterIterationRecord>* block : blocks) {
        for (const OuterIterationRecord& rec : *block) {
            for (size_t s = 0; s < rec.segments.size(); ++s) {
                const EnergyBreakdown& e = rec.segments[s];
                std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                              rec.outer_iter, static_cast<int>(s + 1), e.dirichlet, e.laplacian,
                              e.mismatch, e.total, rec.path_total);
                out << buf;
            }
        }
    }
    if (!out) {
        fail(path.string(), "write failed");
    }
}

ordered_json settings_json(const JobConfig& cfg) {
    const GeodesicSettings& s = cfg.settings;
    ordered_json reg;
    reg["max_iterations"] = s.registration.max_iterations;
    reg["rel_tol"] = s.registration.rel_tol;
    reg["armijo_c"] = s.registration.armijo_c;
    reg["backtrack_factor"] = s.registration.backtrack_factor;
    reg["max_backtracks"] = s.registration.max_backtracks;
    reg["step_init"] = s.registration.step_init;
    ordered_json solver;
    solver["outer_tol"] = s.outer_tol;
    solver["max_outer"] = s.max_outer;
    solver["cg_rel_tol"] = s.cg_rel_tol;
    solver["energy_scale"] = s.energy_scale;
    solver["registration"] = std::move(reg);
    return solver;
}

/// Tracks files created by one run_job call so a failure can undo them.
struct OutputTracker {
    fs::path dir;
    std::vector<fs::path> files;
    bool created_dir = false;

    void save_frame(const ImageGrid& img, int k) {
        const fs::path p = dir / frame_name(k);
        save_image(img, p.string());
        files.push_back(p);
    }

    void cleanup() {
        std::error_code ec;
        for (const fs::path& f : files) {
            fs::remove(f, ec);
        }
        if (created_dir) {
            fs::remove(dir, ec);  // only succeeds if nothing else is inside
        }
    }
};

void validate_config(const JobConfig& cfg) {
    const size_t n_images = cfg.control_image_paths.size();
    if (cfg.mode == "geodesic") {
        if (n_images != 2) {
            throw std::invalid_argument("geodesic mode needs exactly 2 images, got " +
                                        std::to_string(n_images));
        }
    } else if (cfg.mode == "bezier" || cfg.mode == "piecewise-geodesic" ||
               cfg.mode == "energy-report") {
        if (n_images < 2) {
            throw std::invalid_argument(cfg.mode + " mode needs at least 2 images, got " +
                                        std::to_string(n_images));
        }
    } else {
        throw std::invalid_argument("unknown mode \"" + cfg.mode +
                                    "\" (expected geodesic, bezier, piecewise-geodesic or energy-report)");
    }
    if (cfg.num_segments < 1) {
        throw std::invalid_argument("K must be >= 1");
    }
    if (!(cfg.delta > 0.0) || !(cfg.gamma > 0.0)) {
        throw std::invalid_argument("delta and gamma must be positive");
    }
    if (cfg.levels < 1) {
        throw std::invalid_argument("levels must be >= 1");
    }
    if (!cfg.eval_indices.empty() && cfg.mode != "bezier") {
        throw std::invalid_argument("eval_indices only applies to bezier mode");
    }
    for (size_t i = 0; i < cfg.eval_indices.size(); ++i) {
        const int k = cfg.eval_indices[i];
        if (k < 0 || k > cfg.num_segments) {
            throw std::invalid_argument("eval_indices entry " + std::to_string(k) +
                                        " outside [0, K]");
        }
        for (size_t j = 0; j < i; ++j) {
            if (cfg.eval_indices[j] == k) {
                throw std::invalid_argument("eval_indices must be unique, " + std::to_string(k) +
                                            " repeats");
            }
        }
    }
    if (cfg.mode == "energy-report" && cfg.num_segments + 1 != static_cast<int>(n_images)) {
        throw std::invalid_argument("energy-report mode treats the inputs as a ready path, so K must "
                                    "equal #images - 1 (" + std::to_string(n_images - 1) + ")");
    }
    if (!(cfg.settings.energy_scale > 0.0)) {
        throw std::invalid_argument("energy_scale must be positive");
    }
}

} // namespace

ImageGrid load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(path, "cannot open file");
    }
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (in.gcount() == 2 && magic[0] == 'P' && magic[1] == '5') {
        return load_pgm(in, path);
    }
    if (in.gcount() == 2 && static_cast<unsigned char>(magic[0]) == 0x89 && magic[1] == 'P') {
        in.close();
        return load_png(path);
    }
    fail(path, "unsupported format (need binary PGM \"P5\" or PNG)");
}

void save_image(const ImageGrid& img, const std::string& path) {
    if (img.width < 2 || img.height < 2 ||
        img.values.size() != static_cast<size_t>(img.width) * img.height) {
        throw std::invalid_argument("save_image: malformed image");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(path, "cannot open for writing");
    }
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<char> bytes(img.values.size());
    for (size_t i = 0; i < img.values.size(); ++i) {
        const double v = std::clamp(img.values[i], 0.0, 1.0);
        bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(path, "write failed");
    }
}

JobConfig parse_job_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        fail(path, "cannot open file");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    if (!j.is_object()) {
        throw std::invalid_argument(path + ": top level must be a JSON object");
    }
    reject_unknown_keys(j,
                        {"mode", "control_image_paths", "K", "delta", "gamma", "levels",
                         "eval_indices", "output_dir", "solver"},
                        path, "config");

    JobConfig cfg;
    cfg.mode = j.at("mode").get<std::string>();
    if (!j.contains("control_image_paths") || !j["control_image_paths"].is_array()) {
        throw std::invalid_argument(path + ": \"control_image_paths\" must be an array of paths");
    }
    for (const json& p : j["control_image_paths"]) {
        if (!p.is_string()) {
            throw std::invalid_argument(path + ": \"control_image_paths\" entries must be strings");
        }
        cfg.control_image_paths.push_back(p.get<std::string>());
    }
    cfg.num_segments = get_int(j, "K", path);
    cfg.delta = get_double(j, "delta", path);
    cfg.gamma = get_double(j, "gamma", path);
    if (j.contains("levels")) {
        cfg.levels = get_int(j, "levels", path);
    }
    if (j.contains("eval_indices")) {
        if (!j["eval_indices"].is_array()) {
            throw std::invalid_argument(path + ": \"eval_indices\" must be an array of integers");
        }
        for (const json& v : j["eval_indices"]) {
            if (!v.is_number_integer()) {
                throw std::invalid_argument(path + ": \"eval_indices\" entries must be integers");
            }
            cfg.eval_indices.push_back(v.get<int>());
        }
    }
    if (j.contains("output_dir")) {
        cfg.output_dir = j["output_dir"].get<std::string>();
    }
    if (j.contains("solver")) {
        const json& s = j["solver"];
        if (!s.is_object()) {
            throw std::invalid_argument(path + ": \"solver\" must be an object");
        }
        reject_unknown_keys(
            s, {"outer_tol", "max_outer", "cg_rel_tol", "energy_scale", "registration"}, path,
            "solver");
        if (s.contains("outer_tol")) cfg.settings.outer_tol = get_double(s, "outer_tol", path);
        if (s.contains("max_outer")) cfg.settings.max_outer = get_int(s, "max_outer", path);
        if (s.contains("cg_rel_tol")) cfg.settings.cg_rel_tol = get_double(s, "cg_rel_tol", path);
        if (s.contains("energy_scale")) cfg.settings.energy_scale = get_double(s, "energy_scale", path);
        if (s.contains("registration")) {
            const json& r = s["registration"];
            if (!r.is_object()) {
                throw std::invalid_argument(path + ": \"solver.registration\" must be an object");
            }
            reject_unknown_keys(r,
                                {"max_iterations", "rel_tol", "armijo_c", "backtrack_factor",
                                 "max_backtracks", "step_init"},
                                path, "solver.registration");
            RegistrationSettings& reg = cfg.settings.registration;
            if (r.contains("max_iterations")) reg.max_iterations = get_int(r, "max_iterations", path);
            if (r.contains("rel_tol")) reg.rel_tol = get_double(r, "rel_tol", path);
            if (r.contains("armijo_c")) reg.armijo_c = get_double(r, "armijo_c", path);
            if (r.contains("backtrack_factor")) reg.backtrack_factor = get_double(r, "backtrack_factor", path);
            if (r.contains("max_backtracks")) reg.max_backtracks = get_int(r, "max_backtracks", path);
            if (r.contains("step_init")) reg.step_init = get_double(r, "step_init", path);
        }
    }
    validate_config(cfg);
    return cfg;
}

int run_job(const JobConfig& config) {
    OutputTracker out;
    try {
        JobConfig cfg = config;
        validate_config(cfg);
        cfg.settings.init_levels = cfg.levels;
        if (cfg.output_dir.empty()) {
            throw std::invalid_argument("no output directory (set output_dir in the config or pass --output-dir)");
        }

        std::vector<ImageGrid> controls;
        controls.reserve(cfg.control_image_paths.size());
        for (const std::string& p : cfg.control_image_paths) {
            controls.push_back(load_image(p));
            if (!controls.back().same_dims(controls.front())) {
                fail(p, "image dimensions differ from the first input");
            }
        }

        out.dir = cfg.output_dir;
        if (!fs::exists(out.dir)) {
            fs::create_directories(out.dir);
            out.created_dir = true;
        }

        const int K = cfg.num_segments;
        const double scale = cfg.settings.energy_scale;
        std::vector<std::vector<OuterIterationRecord>> blocks;
        ordered_json manifest;
        manifest["version"] = kLibraryVersion;
        manifest["mode"] = cfg.mode;
        manifest["control_image_paths"] = cfg.control_image_paths;
        manifest["K"] = K;
        manifest["delta"] = cfg.delta;
        manifest["gamma"] = cfg.gamma;
        manifest["levels"] = cfg.levels;

        if (cfg.mode == "geodesic") {
            GeodesicResult res = solve_geodesic(controls[0], controls[1], K, cfg.delta, cfg.gamma,
                                                cfg.settings);
            for (int k = 0; k <= K; ++k) {
                out.save_frame(res.path.images[k], k);
            }
            blocks.push_back(std::move(res.log));
        } else if (cfg.mode == "bezier") {
            BezierJob job;
            job.controls = std::move(controls);
            job.num_segments = K;
            job.delta = cfg.delta;
            job.gamma = cfg.gamma;
            job.eval_indices = cfg.eval_indices;
            job.settings = cfg.settings;
            BezierCurveResult res = bezier_curve(job);
            for (const BezierEvaluation& ev : res.evaluations) {
                out.save_frame(ev.image, ev.k);
            }
            for (GeodesicResult& g : res.level1) {
                blocks.push_back(std::move(g.log));
            }
            ordered_json idx = ordered_json::array();
            if (cfg.eval_indices.empty()) {
                for (int k = 0; k <= K; ++k) {
                    idx.push_back(k);
                }
            } else {
                for (int k : cfg.eval_indices) {
                    idx.push_back(k);
                }
            }
            manifest["eval_indices"] = std::move(idx);
        } else if (cfg.mode == "piecewise-geodesic") {
            const int pairs = static_cast<int>(controls.size()) - 1;
            const int per_pair =
                static_cast<int>(std::max(1L, std::lround(static_cast<double>(K) / pairs)));
            manifest["segments_per_pair"] = per_pair;
            int frame = 0;
            for (int p = 0; p < pairs; ++p) {
                GeodesicResult res = solve_geodesic(controls[p], controls[p + 1], per_pair,
                                                    cfg.delta, cfg.gamma, cfg.settings);
                for (int k = (p == 0 ? 0 : 1); k <= per_pair; ++k) {
                    out.save_frame(res.path.images[k], frame++);
                }
                blocks.push_back(std::move(res.log));
            }
        } else {  // energy-report
            std::vector<OuterIterationRecord> block(1);
            OuterIterationRecord& rec = block[0];
            rec.outer_iter = 1;
            rec.min_det = std::numeric_limits<double>::infinity();
            double total = 0.0;
            for (int k = 1; k <= K; ++k) {
                RegistrationResult reg =
                    register_pair_multilevel(controls[k - 1], controls[k], cfg.delta, cfg.gamma,
                                             cfg.levels, cfg.settings.registration);
                total += reg.energy.total;
                rec.min_det = std::min(rec.min_det, min_det_jacobian(reg.phi));
                EnergyBreakdown e = reg.energy;
                e.dirichlet *= scale;
                e.laplacian *= scale;
                e.mismatch *= scale;
                e.total *= scale;
                rec.segments.push_back(e);
            }
            rec.path_total = scale * K * total;
            blocks.push_back(std::move(block));
        }

        const fs::path csv_path = out.dir / "energies.csv";
        std::vector<const std::vector<OuterIterationRecord>*> block_ptrs;
        for (const std::vector<OuterIterationRecord>& b : blocks) {
            block_ptrs.push_back(&b);
        }
        write_csv(csv_path, block_ptrs);
        out.files.push_back(csv_path);

        manifest["solver"] = settings_json(cfg);
        const fs::path manifest_path = out.dir / "manifest.json";
        std::ofstream mf(manifest_path, std::ios::binary);
        if (!mf) {
            fail(manifest_path.string(), "cannot open for writing");
        }
        mf << manifest.dump(2) << "\n";
        if (!mf) {
            fail(manifest_path.string(), "write failed");
        }
        out.files.push_back(manifest_path);
        return 0;
    } catch (const std::exception& e) {
        out.cleanup();
        std::cerr << "metamorph: " << e.what() << std::endl;
        return 1;
    }
}

} // namespace metamorph
