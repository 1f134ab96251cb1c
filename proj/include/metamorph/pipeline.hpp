#pragma once

#include <string>
#include <vector>

#include "metamorph/geodesic.hpp"
#include "metamorph/image.hpp"

namespace metamorph {

inline constexpr const char* kLibraryVersion = "0.1.0";

/// A batch job as described by a JSON config file. Modes:
///  - geodesic: one geodesic between exactly two images, frames = the path.
///  - bezier: discrete Bezier curve through >= 2 control images.
///  - piecewise-geodesic: comparison mode, one short geodesic per
///    consecutive control pair with max(1, round(K/n)) segments each.
///  - energy-report: registrations between consecutive inputs only; writes
///    the energy table, no frames, images are never moved.
struct JobConfig {
    std::string mode;
    std::vector<std::string> control_image_paths;
    int num_segments = 1;  ///< K
    double delta = 1.0;
    double gamma = 1.0;
    int levels = 1;  ///< multilevel depth (registration init / energy-report)
    std::vector<int> eval_indices;  ///< bezier only; empty = all of 0..K
    std::string output_dir;
    GeodesicSettings settings;  ///< solver overrides land here; threads come from the CLI
};

/// Reads an 8-bit grayscale image, PGM (P5) or PNG; color PNG is reduced by
/// Rec. 601 luminance. Intensities map to [0,1] as value/255. The format is
/// detected from the file's magic bytes, not the extension.
ImageGrid load_image(const std::string& path);

/// Writes 8-bit binary PGM: clamp to [0,1], scale by 255, round half away
/// from zero. save then load then save again reproduces the middle file
/// bit-exactly.
void save_image(const ImageGrid& img, const std::string& path);

/// Parses and validates a job config file. Unknown keys are rejected so a
/// typo cannot silently fall back to a default. Does not read the images.
JobConfig parse_job_config(const std::string& path);

/// Runs the job: writes frame_XXX.pgm, energies.csv and manifest.json into
/// output_dir. Returns 0 on success; on failure prints one diagnostic line
/// to stderr, removes whatever outputs it had created, and returns 1.
int run_job(const JobConfig& config);

} // namespace metamorph
