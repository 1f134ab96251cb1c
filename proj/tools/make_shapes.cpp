#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "metamorph/pipeline.hpp"
#include "metamorph/synthetic.hpp"

// Generates the synthetic demo scene (ring, square, triangle, disk) plus
// ready-to-run job configs, so the README quickstart is two commands.
int main(int argc, char** argv) {
    CLI::App app{"Generate synthetic demo images and job configs"};
    int size = 65;
    std::string out_dir = "demo";
    app.add_option("--size", size, "Image side length in pixels")->check(CLI::Range(17, 1025));
    app.add_option("--out", out_dir, "Output directory");
    CLI11_PARSE(app, argc, argv);

    namespace fs = std::filesystem;
    try {
        fs::create_directories(out_dir);
        const fs::path dir = out_dir;
        const double edge = 0.04;
        metamorph::save_image(metamorph::ring(size, size, 0.5, 0.5, 0.28, 0.10, edge),
                              (dir / "ring.pgm").string());
        metamorph::save_image(metamorph::filled_square(size, size, 0.5, 0.5, 0.26, edge),
                              (dir / "square.pgm").string());
        metamorph::save_image(metamorph::filled_triangle(size, size, 0.5, 0.5, 0.30, edge),
                              (dir / "triangle.pgm").string());
        metamorph::save_image(metamorph::filled_disk(size, size, 0.5, 0.5, 0.26, edge),
                              (dir / "disk.pgm").string());

        std::ofstream geo(dir / "geodesic_job.json");
        geo << R"({
  "mode": "geodesic",
  "control_image_paths": [")" << (dir / "ring.pgm").generic_string() << R"(", ")"
            << (dir / "disk.pgm").generic_string() << R"("],
  "K": 8,
  "delta": 5e-2,
  "gamma": 1e-3,
  "output_dir": ")" << (dir / "geodesic_out").generic_string() << R"("
}
)";
        std::ofstream bez(dir / "bezier_job.json");
        bez << R"({
  "mode": "bezier",
  "control_image_paths": [")" << (dir / "ring.pgm").generic_string() << R"(", ")"
            << (dir / "square.pgm").generic_string() << R"(", ")"
            << (dir / "triangle.pgm").generic_string() << R"(", ")"
            << (dir / "disk.pgm").generic_string() << R"("],
  "K": 8,
  "delta": 5e-2,
  "gamma": 1e-3,
  "output_dir": ")" << (dir / "bezier_out").generic_string() << R"("
}
)";
        std::cout << "wrote demo scene to " << out_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "make_shapes: " << e.what() << std::endl;
        return 1;
    }
}
