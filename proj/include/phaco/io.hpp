#pragma once

#include <phaco/image.hpp>
#include <phaco/lssat.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace phaco::io {

// Whole-file helpers. Writes go to a temp file in the same directory and are
// renamed into place, so readers never observe partial content.
std::string read_file(const std::string& path);
void atomic_write(const std::string& path, const std::string& bytes);

// Binary 8-bit PGM (P5). Masks store foreground as 255 and read back
// anything > 127 as foreground; grays are stored as round(v * 255).
void write_mask_pgm(const std::string& path, const BinaryMask& m);
BinaryMask read_mask_pgm(const std::string& path);
void write_gray_pgm(const std::string& path, const GrayFrame& f);
GrayFrame read_gray_pgm(const std::string& path);

// Per-frame feature rows. Native format is little-endian binary
// ("FEAT1", frame count u32, dim u32, f32 rows); comma-separated text is
// accepted as a fallback on read.
void write_features(const std::string& path, const Mat& rows);
Mat read_features(const std::string& path);

struct ManifestFrame {
    int index = 0;
    std::string mask;    // empty = none (feature-only datasets)
    std::string gray;    // empty = none
    std::string feature; // empty = none
    std::optional<int> gt_phase;
    std::optional<double> gt_theta;
};

// Session listing: frame file references plus the metadata every consumer
// needs. Paths are stored as written (normally relative to the manifest).
struct Manifest {
    int k_s = 10;
    int width = 0;
    int height = 0;
    std::uint64_t seed = 0;
    std::vector<ManifestFrame> frames;
};

// check_files verifies that every referenced file exists next to the
// manifest. Frame indices must be strictly increasing.
Manifest load_manifest(const std::string& path, bool check_files = true);
void save_manifest(const Manifest& m, const std::string& path);

// Directory of a path ("." when it has no separator); used to resolve
// manifest-relative file references.
std::string parent_dir(const std::string& path);
std::string join_path(const std::string& dir, const std::string& rel);

} // namespace phaco::io
