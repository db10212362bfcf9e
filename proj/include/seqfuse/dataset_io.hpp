#pragma once

// On-disk dataset formats.
//
// Feature file (binary, little-endian):
//   magic "HVFT" | u32 version=1 | u32 T | u32 dim | u8 stream (0=spatial,
//   1=motion) | T*dim float32, row-major by frame.
//
// Manifest (text):
//   seqfuse-manifest v1
//   classes <C>
//   class <index> <name>            (C lines)
//   video <id> <labels-csv> <spatial-path> <motion-path>
// Paths are relative to the manifest's directory. '#' starts a comment.
//
// Feature files are consumed, never produced from video: the upstream
// CNN/optical-flow stage is external. Any converter just has to emit the
// layout above (one file per stream per video, frame-level features).

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "seqfuse/binary_io.hpp"
#include "seqfuse/features.hpp"

namespace seqfuse {

inline constexpr char kFeatureMagic[4] = {'H', 'V', 'F', 'T'};

inline void write_feature_file(const std::filesystem::path& path, const FeatureSequence& seq) {
  if (seq.frames.empty()) throw ArgumentError("write_feature_file: empty sequence");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  bin::put_magic(os, kFeatureMagic);
  bin::put_u32(os, 1);
  bin::put_u32(os, static_cast<std::uint32_t>(seq.frames.size()));
  bin::put_u32(os, static_cast<std::uint32_t>(seq.dim));
  bin::put_u8(os, static_cast<std::uint8_t>(seq.stream));
  for (const Vec& f : seq.frames)
    for (double v : f) bin::put_f32(os, static_cast<float>(v));
  if (!os) throw DataError("write failed for " + path.string());
}

inline FeatureSequence read_feature_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("missing feature file " + path.string());
  bin::expect_magic(is, kFeatureMagic, path.string());
  const std::uint32_t version = bin::get_u32(is, path.string() + " version");
  if (version != 1)
    throw DataError("unsupported feature file version " + std::to_string(version) + " in " +
                    path.string());
  const std::uint32_t frames = bin::get_u32(is, path.string() + " frame count");
  const std::uint32_t dim = bin::get_u32(is, path.string() + " dim");
  const std::uint8_t tag = bin::get_u8(is, path.string() + " stream tag");
  if (frames == 0 || dim == 0) throw DataError("empty feature file " + path.string());
  if (tag > 1) throw DataError("bad stream tag in " + path.string());

  FeatureSequence seq;
  seq.dim = dim;
  seq.stream = static_cast<Stream>(tag);
  seq.frames.assign(frames, Vec(dim));
  for (std::uint32_t t = 0; t < frames; ++t)
    for (std::uint32_t d = 0; d < dim; ++d)
      seq.frames[t][d] = static_cast<double>(bin::get_f32(is, path.string() + " payload"));
  // Exactly T*dim values, nothing more.
  char extra;
  if (is.get(extra)) throw DataError("trailing bytes in " + path.string());
  return seq;
}

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline std::vector<std::size_t> parse_label_csv(const std::string& csv, std::size_t classes,
                                                const std::string& video_id) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    long v = -1;
    try {
      v = std::stol(item, &pos);
    } catch (const std::exception&) {
      throw DataError("video " + video_id + ": bad label '" + item + "'");
    }
    if (pos != item.size() || v < 0 || static_cast<std::size_t>(v) >= classes)
      throw DataError("video " + video_id + ": label " + item + " outside [0, " +
                      std::to_string(classes) + ")");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw DataError("video " + video_id + ": empty label list");
  return out;
}

}  // namespace detail

// Writes <dir>/<name>.manifest plus one feature file per stream per video
// under <dir>/features/. Returns the manifest path.
inline std::filesystem::path write_dataset(const std::filesystem::path& dir, const Dataset& ds,
                                           const std::string& name) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  for (const VideoSample& s : ds.samples) {
    write_feature_file(dir / "features" / (s.id + "_s.hvft"), s.spatial);
    write_feature_file(dir / "features" / (s.id + "_m.hvft"), s.motion);
  }
  const fs::path manifest = dir / (name + ".manifest");
  std::ofstream os(manifest);
  if (!os) throw DataError("cannot open " + manifest.string() + " for writing");
  os << "seqfuse-manifest v1\n";
  os << "classes " << ds.class_names.size() << "\n";
  for (std::size_t c = 0; c < ds.class_names.size(); ++c)
    os << "class " << c << " " << ds.class_names[c] << "\n";
  for (const VideoSample& s : ds.samples) {
    os << "video " << s.id;
    std::string csv;
    for (std::size_t c = 0; c < s.label.size(); ++c)
      if (s.label[c] != 0.0) csv += (csv.empty() ? "" : ",") + std::to_string(c);
    os << " " << csv << " features/" << s.id << "_s.hvft features/" << s.id << "_m.hvft\n";
  }
  if (!os) throw DataError("write failed for " + manifest.string());
  return manifest;
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path,
                            std::vector<std::string>* warnings = nullptr) {
  namespace fs = std::filesystem;
  std::ifstream is(manifest_path);
  if (!is) throw DataError("missing manifest " + manifest_path.string());
  const fs::path base = manifest_path.parent_path();

  std::string line;
  if (!std::getline(is, line) || line != "seqfuse-manifest v1")
    throw DataError("bad manifest header in " + manifest_path.string());

  Dataset ds;
  std::size_t classes = 0;
  bool classes_seen = false;
  std::map<std::string, bool> seen_ids;
  std::size_t spatial_dim = 0, motion_dim = 0;

  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    auto parse_count = [&](const std::string& text, const char* what) {
      try {
        std::size_t pos = 0;
        const unsigned long v = std::stoul(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        throw DataError("bad " + std::string(what) + " '" + text + "' in " +
                        manifest_path.string());
      }
    };
    if (tok[0] == "classes") {
      if (tok.size() != 2) throw DataError("bad classes line in " + manifest_path.string());
      classes = parse_count(tok[1], "class count");
      classes_seen = true;
      ds.class_names.assign(classes, "");
    } else if (tok[0] == "class") {
      if (!classes_seen || tok.size() != 3)
        throw DataError("bad class line in " + manifest_path.string());
      const std::size_t idx = parse_count(tok[1], "class index");
      if (idx >= classes) throw DataError("class index out of range in " + manifest_path.string());
      ds.class_names[idx] = tok[2];
    } else if (tok[0] == "video") {
      if (!classes_seen) throw DataError("video before classes in " + manifest_path.string());
      if (tok.size() != 5)
        throw DataError("bad video line in " + manifest_path.string() + ": " + line);
      VideoSample s;
      s.id = tok[1];
      if (seen_ids.count(s.id)) throw DataError("duplicate video id " + s.id);
      seen_ids[s.id] = true;
      const auto ids = detail::parse_label_csv(tok[2], classes, s.id);
      s.label.assign(classes, 0.0);
      for (std::size_t c : ids) s.label[c] = 1.0;
      s.spatial = read_feature_file(base / tok[3]);
      s.motion = read_feature_file(base / tok[4]);
      if (s.spatial.stream != Stream::spatial)
        throw DataError("video " + s.id + ": " + tok[3] + " is not tagged as a spatial stream");
      if (s.motion.stream != Stream::motion)
        throw DataError("video " + s.id + ": " + tok[4] + " is not tagged as a motion stream");
      if (spatial_dim == 0) {
        spatial_dim = s.spatial.dim;
        motion_dim = s.motion.dim;
      } else if (s.spatial.dim != spatial_dim || s.motion.dim != motion_dim) {
        throw DataError("video " + s.id + ": feature dims (" + std::to_string(s.spatial.dim) +
                        ", " + std::to_string(s.motion.dim) + ") disagree with the corpus (" +
                        std::to_string(spatial_dim) + ", " + std::to_string(motion_dim) + ")");
      }
      ds.samples.push_back(std::move(s));
    } else {
      throw DataError("unknown record '" + tok[0] + "' in " + manifest_path.string());
    }
  }
  for (std::size_t c = 0; c < ds.class_names.size(); ++c)
    if (ds.class_names[c].empty())
      throw DataError("class " + std::to_string(c) + " missing a name in " +
                      manifest_path.string());
  if (ds.samples.empty() && warnings)
    warnings->push_back("manifest " + manifest_path.string() + " lists no videos");
  return ds;
}

}  // namespace seqfuse
