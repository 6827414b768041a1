#include "probsal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

#include "probsal/error.hpp"
#include "probsal/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace probsal {

namespace {

bool is_binary(const Tensor& t) {
  return std::all_of(t.vec().begin(), t.vec().end(), [](double v) { return v == 0.0 || v == 1.0; });
}

Tensor binarize_half(const Tensor& t) {
  Tensor b(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) b[i] = t[i] >= 0.5 ? 1.0 : 0.0;
  return b;
}

std::string to_string(DepthPolarity p) { return p == DepthPolarity::NearLarge ? "near_large" : "near_small"; }

DepthPolarity polarity_from_string(const std::string& s) {
  if (s == "near_large") return DepthPolarity::NearLarge;
  if (s == "near_small") return DepthPolarity::NearSmall;
  throw FormatError("unknown depth polarity '" + s + "'");
}

}  // namespace

void validate(const RgbdSample& s) {
  require(!s.id.empty(), "sample without id");
  require(s.rgb.n() == 1 && s.rgb.c() == 3, s.id + ": rgb must be (1,3,H,W)");
  const int h = s.rgb.h(), w = s.rgb.w();
  auto same_map = [&](const Tensor& t, const std::string& what) {
    require(t.shape() == (Shape{1, 1, h, w}),
            s.id + ": " + what + " has shape " + t.shape().str() + ", rgb is " + s.rgb.shape().str());
  };
  same_map(s.depth, "depth");
  require(!s.annotations.empty(), s.id + ": no annotations");
  for (std::size_t i = 0; i < s.annotations.size(); ++i) {
    same_map(s.annotations[i], "annotation " + std::to_string(i));
    require(is_binary(s.annotations[i]), s.id + ": annotation " + std::to_string(i) + " is not binary");
  }
  require(s.rgb.all_in(0.0, 1.0), s.id + ": rgb outside [0,1]");
  require(s.depth.all_in(0.0, 1.0), s.id + ": depth outside [0,1]");
  if (s.clean_depth) {
    same_map(*s.clean_depth, "clean_depth");
    require(s.clean_depth->all_in(0.0, 1.0), s.id + ": clean_depth outside [0,1]");
  }
  for (const auto& m : s.object_masks) same_map(m, "object mask");
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw InvalidArgument("unknown split '" + s + "'");
}

const ManifestEntry& DatasetManifest::find(const std::string& id) const {
  for (const auto& e : entries) {
    if (e.id == id) return e;
  }
  throw NotFoundError("no manifest entry with id '" + id + "'");
}

double linearize_channel(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

IntensityImage to_intensity(const Tensor& rgb) {
  require(rgb.c() == 3, "to_intensity expects 3 channels, got shape " + rgb.shape().str());
  require(rgb.all_in(0.0, 1.0), "to_intensity: rgb values outside [0,1]");
  Tensor ig(Shape{rgb.n(), 1, rgb.h(), rgb.w()});
  const std::size_t plane = rgb.shape().plane();
  for (int n = 0; n < rgb.n(); ++n) {
    const double* r = rgb.data() + std::size_t(n) * 3 * plane;
    const double* g = r + plane;
    const double* b = g + plane;
    double* out = ig.data() + std::size_t(n) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = 0.2126 * linearize_channel(r[i]) + 0.7152 * linearize_channel(g[i]) +
                       0.0722 * linearize_channel(b[i]);
      out[i] = std::clamp(v, 0.0, 1.0);
    }
  }
  return {std::move(ig)};
}

void validate(const DatasetManifest& m) {
  std::set<std::string> ids;
  for (const auto& e : m.entries) {
    require(!e.id.empty(), "manifest entry without id");
    require(ids.insert(e.id).second, "duplicate manifest id '" + e.id + "'");
    require(!e.annotations.empty(), e.id + ": manifest entry without annotations");
    std::vector<std::string> files{e.rgb, e.depth};
    files.insert(files.end(), e.annotations.begin(), e.annotations.end());
    files.insert(files.end(), e.object_masks.begin(), e.object_masks.end());
    if (e.clean_depth) files.push_back(*e.clean_depth);
    for (const auto& f : files) {
      if (!fs::exists(m.resolve(f))) throw IoError(e.id + ": missing file " + m.resolve(f).string());
    }
  }
  for (double v : m.mean_rgb) require(v >= 0.0 && v <= 1.0, "mean_rgb outside [0,1]");
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.root = path.has_parent_path() ? path.parent_path() : fs::path(".");
  bool have_mean = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (j.contains("meta")) {
        const auto& meta = j["meta"];
        if (meta.contains("split")) m.split = split_from_string(meta["split"].get<std::string>());
        if (meta.contains("mean_rgb")) {
          m.mean_rgb = meta["mean_rgb"].get<Rgb>();
          have_mean = true;
        }
        if (meta.contains("depth_polarity")) m.polarity = polarity_from_string(meta["depth_polarity"]);
        continue;
      }
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.rgb = j.at("rgb").get<std::string>();
      e.depth = j.at("depth").get<std::string>();
      e.annotations = j.at("annotations").get<std::vector<std::string>>();
      if (j.contains("clean_depth") && !j["clean_depth"].is_null()) e.clean_depth = j["clean_depth"].get<std::string>();
      if (j.contains("object_masks")) e.object_masks = j["object_masks"].get<std::vector<std::string>>();
      if (j.contains("size")) {
        e.height = j["size"].at(0).get<int>();
        e.width = j["size"].at(1).get<int>();
      }
      m.entries.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate(m);
  if (!have_mean && !m.entries.empty()) m.mean_rgb = mean_rgb_of(load_all(m));
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  validate(m);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  json meta = {{"split", to_string(m.split)}, {"mean_rgb", m.mean_rgb}, {"depth_polarity", to_string(m.polarity)}};
  out << json{{"meta", meta}}.dump() << '\n';
  for (const auto& e : m.entries) {
    json j = {{"id", e.id}, {"rgb", e.rgb}, {"depth", e.depth}, {"annotations", e.annotations}};
    if (e.clean_depth) j["clean_depth"] = *e.clean_depth;
    if (!e.object_masks.empty()) j["object_masks"] = e.object_masks;
    if (e.height > 0) j["size"] = {e.height, e.width};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("short write on manifest " + path.string());
}

RgbdSample load_sample(const DatasetManifest& m, const ManifestEntry& e, int resize_to) {
  RgbdSample s;
  s.id = e.id;
  s.rgb = io::read_rgb(m.resolve(e.rgb));
  s.depth = io::read_gray(m.resolve(e.depth));
  if (e.height > 0 && (s.rgb.h() != e.height || s.rgb.w() != e.width)) {
    throw FormatError(e.id + ": image is " + std::to_string(s.rgb.h()) + "x" + std::to_string(s.rgb.w()) +
                      ", manifest records " + std::to_string(e.height) + "x" + std::to_string(e.width));
  }
  if (m.polarity == DepthPolarity::NearSmall) {
    for (auto& v : s.depth.vec()) v = 1.0 - v;
  }
  for (const auto& a : e.annotations) s.annotations.push_back(binarize_half(io::read_gray(m.resolve(a))));
  if (e.clean_depth) s.clean_depth = io::read_gray(m.resolve(*e.clean_depth));
  for (const auto& om : e.object_masks) s.object_masks.push_back(binarize_half(io::read_gray(m.resolve(om))));

  if (resize_to > 0 && (s.height() != resize_to || s.width() != resize_to)) {
    s.rgb = io::resize(s.rgb, resize_to, resize_to);
    s.depth = io::resize(s.depth, resize_to, resize_to);
    for (auto& a : s.annotations) a = binarize_half(io::resize(a, resize_to, resize_to));
    if (s.clean_depth) s.clean_depth = io::resize(*s.clean_depth, resize_to, resize_to);
    for (auto& om : s.object_masks) om = binarize_half(io::resize(om, resize_to, resize_to));
    for (auto* t : {&s.rgb, &s.depth}) {
      for (auto& v : t->vec()) v = std::clamp(v, 0.0, 1.0);
    }
  }
  validate(s);
  return s;
}

std::vector<RgbdSample> load_all(const DatasetManifest& m, int resize_to) {
  std::vector<RgbdSample> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back(load_sample(m, e, resize_to));
  return out;
}

ManifestEntry save_sample(const RgbdSample& s, const fs::path& root) {
  validate(s);
  ManifestEntry e;
  e.id = s.id;
  e.rgb = "rgb/" + s.id + ".png";
  e.depth = "depth/" + s.id + ".png";
  io::write_rgb(root / e.rgb, s.rgb);
  io::write_gray(root / e.depth, s.depth);
  for (std::size_t i = 0; i < s.annotations.size(); ++i) {
    std::string rel = i == 0 ? "gt/" + s.id + ".png" : "gt/" + s.id + "_" + std::to_string(i) + ".png";
    io::write_gray(root / rel, s.annotations[i]);
    e.annotations.push_back(rel);
  }
  if (s.clean_depth) {
    e.clean_depth = "clean_depth/" + s.id + ".png";
    io::write_gray(root / *e.clean_depth, *s.clean_depth);
  }
  for (std::size_t i = 0; i < s.object_masks.size(); ++i) {
    std::string rel = "masks/" + s.id + "_" + std::to_string(i) + ".png";
    io::write_gray(root / rel, s.object_masks[i]);
    e.object_masks.push_back(rel);
  }
  e.height = s.height();
  e.width = s.width();
  return e;
}

Rgb mean_rgb_of(const std::vector<RgbdSample>& samples) {
  Rgb acc{0, 0, 0};
  double count = 0;
  for (const auto& s : samples) {
    const std::size_t plane = s.rgb.shape().plane();
    for (int c = 0; c < 3; ++c) {
      const double* p = s.rgb.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) acc[c] += p[i];
    }
    count += double(plane);
  }
  if (count > 0) {
    for (auto& v : acc) v /= count;
  }
  return acc;
}

DatasetManifest scan_benchmark_layout(const fs::path& root, Split split, DepthPolarity polarity) {
  const fs::path rgb_dir = root / "RGB", depth_dir = root / "depth", gt_dir = root / "GT";
  for (const auto& d : {rgb_dir, depth_dir, gt_dir}) {
    if (!fs::is_directory(d)) throw IoError("benchmark layout: missing directory " + d.string());
  }
  auto by_stem = [](const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& f : fs::directory_iterator(dir)) {
      if (f.is_regular_file()) files[f.path().stem().string()] = f.path().filename().string();
    }
    return files;
  };
  const auto rgbs = by_stem(rgb_dir), depths = by_stem(depth_dir), gts = by_stem(gt_dir);
  DatasetManifest m;
  m.root = root;
  m.split = split;
  m.polarity = polarity;
  for (const auto& [stem, file] : rgbs) {
    auto d = depths.find(stem);
    auto g = gts.find(stem);
    if (d == depths.end() || g == gts.end()) throw IoError("benchmark layout: incomplete triple for '" + stem + "'");
    m.entries.push_back({stem, "RGB/" + file, "depth/" + d->second, {"GT/" + g->second}, std::nullopt, {}, 0, 0});
  }
  validate(m);
  if (!m.entries.empty()) m.mean_rgb = mean_rgb_of(load_all(m));
  return m;
}

}  // namespace probsal
