#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "metamorph/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Time-discrete metamorphosis: geodesics and Bezier curves between grayscale images"};
    std::string config_path;
    std::string output_dir;
    int threads = 1;
    app.add_option("--config", config_path, "Job config JSON file")->required();
    app.add_option("--output-dir", output_dir, "Override the config's output directory");
    app.add_option("--threads", threads, "Worker threads for independent subproblems")
        ->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    try {
        metamorph::JobConfig cfg = metamorph::parse_job_config(config_path);
        if (!output_dir.empty()) {
            cfg.output_dir = output_dir;
        }
        cfg.settings.threads = threads;
        return metamorph::run_job(cfg);
    } catch (const std::exception& e) {
        std::cerr << "metamorph: " << e.what() << std::endl;
        return 1;
    }
}
