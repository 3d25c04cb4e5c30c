#pragma once

// On-disk formats. All integers are unsigned 32-bit little-endian.
//
// Corpus directory:
//   metadata.json   {"format": "RAFV1", "scale": id, "C": n, "H": h, "W": w,
//                    "videos": [{"video_id", "subject_id", "labels": [...],
//                                "fps", "L", "file"}]}
//   <video_id>.rafv "RAFV1" (5 bytes), L, H, W, then L·H·W·3 float32 LE
//                   pixels in (frame, row, column, channel) order.
//
// Weights file:
//   "RAFW1" (5 bytes), parameter count, then per parameter in name order:
//   name length, name bytes (UTF-8), rank, each dimension, and the values as
//   float64 LE.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "relaff/data.hpp"
#include "relaff/parameters.hpp"

namespace relaff {

void write_corpus(const std::filesystem::path& dir, const std::vector<Video>& videos);
std::vector<Video> read_corpus(const std::filesystem::path& dir);

void write_video_file(const std::filesystem::path& path, const Video& video);
// Reads frames into `video` (L, H, W and frames).
void read_video_file(const std::filesystem::path& path, Video& video);

struct StoredTensor {
  Shape shape;
  std::vector<double> data;
};

void write_weights(const std::filesystem::path& path, const ParameterStore& store);
std::map<std::string, StoredTensor> read_weights(const std::filesystem::path& path);
// Loads a weights file into `store`; names and shapes must match exactly.
void load_weights(const std::filesystem::path& path, ParameterStore& store);

}  // namespace relaff
