#include "relaff/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "relaff/error.hpp"

namespace relaff {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kVideoMagic[5] = {'R', 'A', 'F', 'V', '1'};
constexpr char kWeightsMagic[5] = {'R', 'A', 'F', 'W', '1'};

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path), f_(path, std::ios::binary) {
    if (!f_) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  }
  void bytes(const void* p, std::size_t n) {
    f_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!f_) throw IoError(fmt::format("failed writing {}", path_.string()));
  }
  void u32(std::size_t v) {
    if (v > 0xffffffffULL) throw IoError(fmt::format("{}: value {} exceeds 32 bits", path_.string(), v));
    const auto x = static_cast<std::uint32_t>(v);
    bytes(&x, 4);
  }

 private:
  fs::path path_;
  std::ofstream f_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path), f_(path, std::ios::binary) {
    if (!f_) throw IoError(fmt::format("cannot open {}", path.string()));
  }
  void bytes(void* p, std::size_t n) {
    f_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(f_.gcount()) != n) throw IoError(fmt::format("{}: truncated file", path_.string()));
  }
  std::uint32_t u32() {
    std::uint32_t x = 0;
    bytes(&x, 4);
    return x;
  }
  void expect_magic(const char (&magic)[5]) {
    char got[5];
    bytes(got, 5);
    if (std::memcmp(got, magic, 5) != 0) {
      throw IoError(fmt::format("{}: bad magic, expected {}", path_.string(), std::string(magic, 5)));
    }
  }
  void expect_end() {
    if (f_.peek() != std::char_traits<char>::eof()) throw IoError(fmt::format("{}: trailing bytes", path_.string()));
  }

 private:
  fs::path path_;
  std::ifstream f_;
};

}  // namespace

void write_video_file(const fs::path& path, const Video& video) {
  if (video.frames.size() != video.L * video.frame_size()) {
    throw ContractError(fmt::format("video {}: frame buffer does not match {}x{}x{}", video.video_id, video.L,
                                    video.H, video.W));
  }
  Writer w(path);
  w.bytes(kVideoMagic, 5);
  w.u32(video.L);
  w.u32(video.H);
  w.u32(video.W);
  w.bytes(video.frames.data(), video.frames.size() * sizeof(float));
}

void read_video_file(const fs::path& path, Video& video) {
  Reader r(path);
  r.expect_magic(kVideoMagic);
  video.L = r.u32();
  video.H = r.u32();
  video.W = r.u32();
  video.frames.resize(video.L * video.frame_size());
  r.bytes(video.frames.data(), video.frames.size() * sizeof(float));
  r.expect_end();
}

void write_corpus(const fs::path& dir, const std::vector<Video>& videos) {
  if (videos.empty()) throw ContractError("write_corpus: no videos");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  json meta;
  meta["format"] = "RAFV1";
  meta["scale"] = videos[0].labels.scale.id;
  meta["C"] = videos[0].labels.values.size();
  meta["H"] = videos[0].H;
  meta["W"] = videos[0].W;
  meta["videos"] = json::array();
  for (const auto& v : videos) {
    const std::string file = v.video_id + ".rafv";
    write_video_file(dir / file, v);
    meta["videos"].push_back({{"video_id", v.video_id},
                              {"subject_id", v.subject_id},
                              {"labels", v.labels.values},
                              {"fps", v.fps},
                              {"L", v.L},
                              {"file", file}});
  }
  std::ofstream f(dir / "metadata.json", std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot write {}", (dir / "metadata.json").string()));
  f << meta.dump(2) << "\n";
}

std::vector<Video> read_corpus(const fs::path& dir) {
  const fs::path meta_path = dir / "metadata.json";
  std::ifstream f(meta_path);
  if (!f) throw IoError(fmt::format("no corpus at {} (missing metadata.json)", dir.string()));
  std::vector<Video> videos;
  try {
    const json meta = json::parse(f);
    if (meta.at("format").get<std::string>() != "RAFV1") throw IoError("unsupported corpus format");
    const LabelScale scale = label_scale(meta.at("scale").get<std::string>());
    for (const auto& entry : meta.at("videos")) {
      Video v;
      v.video_id = entry.at("video_id").get<std::string>();
      v.subject_id = entry.at("subject_id").get<std::string>();
      v.labels.values = entry.at("labels").get<std::vector<double>>();
      v.labels.scale = scale;
      v.fps = entry.at("fps").get<double>();
      read_video_file(dir / entry.at("file").get<std::string>(), v);
      if (v.L != entry.at("L").get<std::size_t>()) {
        throw IoError(fmt::format("video {}: metadata says L = {}, file has {}", v.video_id,
                                  entry.at("L").get<std::size_t>(), v.L));
      }
      videos.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw IoError(fmt::format("{}: malformed metadata: {}", meta_path.string(), e.what()));
  }
  if (videos.empty()) throw IoError(fmt::format("{}: corpus has no videos", dir.string()));
  return videos;
}

void write_weights(const fs::path& path, const ParameterStore& store) {
  Writer w(path);
  w.bytes(kWeightsMagic, 5);
  w.u32(store.size());
  for (const auto& [name, v] : store.entries()) {
    w.u32(name.size());
    w.bytes(name.data(), name.size());
    w.u32(v.rank());
    for (std::size_t d : v.shape()) w.u32(d);
    w.bytes(v.data().data(), v.size() * sizeof(double));
  }
}

std::map<std::string, StoredTensor> read_weights(const fs::path& path) {
  Reader r(path);
  r.expect_magic(kWeightsMagic);
  const std::uint32_t count = r.u32();
  std::map<std::string, StoredTensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(r.u32(), '\0');
    r.bytes(name.data(), name.size());
    StoredTensor t;
    t.shape.resize(r.u32());
    for (auto& d : t.shape) d = r.u32();
    t.data.resize(shape_size(t.shape));
    r.bytes(t.data.data(), t.data.size() * sizeof(double));
    if (!out.emplace(name, std::move(t)).second) {
      throw IoError(fmt::format("{}: duplicate parameter '{}'", path.string(), name));
    }
  }
  r.expect_end();
  return out;
}

void load_weights(const fs::path& path, ParameterStore& store) {
  auto stored = read_weights(path);
  std::map<std::string, std::vector<double>> values;
  for (const auto& [name, v] : store.entries()) {
    auto it = stored.find(name);
    if (it == stored.end()) throw IoError(fmt::format("{}: missing parameter '{}'", path.string(), name));
    if (it->second.shape != v.shape()) {
      throw IoError(fmt::format("{}: parameter '{}' has shape {}, model expects {}", path.string(), name,
                                shape_string(it->second.shape), shape_string(v.shape())));
    }
    values[name] = std::move(it->second.data);
  }
  if (stored.size() != store.size()) {
    throw IoError(fmt::format("{}: file holds {} parameters, model has {}", path.string(), stored.size(), store.size()));
  }
  store.load(values);
}

}  // namespace relaff
