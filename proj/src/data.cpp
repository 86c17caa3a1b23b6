#include "osr/data.hpp"

#include "osr/errors.hpp"
#include "osr/rng.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace osr {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Image I/O

namespace {

Tensor read_image_rgb(const fs::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw IoError("cannot read image: " + path.string());
  Tensor t({static_cast<std::size_t>(img.rows), static_cast<std::size_t>(img.cols), 3});
  for (int y = 0; y < img.rows; ++y) {
    const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      // OpenCV loads BGR.
      t.at(y, x, 0) = row[x][2] / 255.0;
      t.at(y, x, 1) = row[x][1] / 255.0;
      t.at(y, x, 2) = row[x][0] / 255.0;
    }
  }
  return t;
}

Tensor read_mask(const fs::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw IoError("cannot read mask: " + path.string());
  Tensor t({static_cast<std::size_t>(img.rows), static_cast<std::size_t>(img.cols)});
  for (int y = 0; y < img.rows; ++y) {
    const std::uint8_t* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.cols; ++x) t.at(y, x) = row[x] >= 128 ? 1.0 : 0.0;
  }
  return t;
}

void write_image_rgb(const Tensor& t, const fs::path& path) {
  const int h = static_cast<int>(t.dim(0)), w = static_cast<int>(t.dim(1));
  cv::Mat img(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(t.at(y, x, c), 0.0, 1.0);
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(path.string(), img))
    throw IoError("cannot write image: " + path.string());
}

void write_mask(const Tensor& t, const fs::path& path) {
  const int h = static_cast<int>(t.dim(0)), w = static_cast<int>(t.dim(1));
  cv::Mat img(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y) {
    std::uint8_t* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < w; ++x) row[x] = t.at(y, x) > 0.5 ? 255 : 0;
  }
  if (!cv::imwrite(path.string(), img))
    throw IoError("cannot write mask: " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw IoError("manifest " + path + " is not valid JSON: " + e.what());
  }

  DatasetManifest m;
  m.base_dir = fs::path(path).parent_path();
  std::vector<std::string> violations;
  auto complain = [&violations](const std::string& where, const std::string& what) {
    violations.push_back(where + ": " + what);
  };

  if (!j.is_object()) {
    throw ConfigError("manifest " + path + ": top-level value must be an object");
  }
  if (!j.contains("version") || !j["version"].is_string())
    complain("$.version", "expected a string");
  else
    m.version = j["version"].get<std::string>();

  if (!j.contains("class_names") || !j["class_names"].is_array() || j["class_names"].empty()) {
    complain("$.class_names", "expected a nonempty array of strings");
  } else {
    for (std::size_t i = 0; i < j["class_names"].size(); ++i) {
      if (!j["class_names"][i].is_string()) {
        complain("$.class_names[" + std::to_string(i) + "]", "expected a string");
      } else {
        m.class_names.push_back(j["class_names"][i].get<std::string>());
      }
    }
  }

  const int ncls = static_cast<int>(m.class_names.size());
  if (!j.contains("samples") || !j["samples"].is_array()) {
    complain("$.samples", "expected an array");
  } else {
    for (std::size_t i = 0; i < j["samples"].size(); ++i) {
      const std::string where = "$.samples[" + std::to_string(i) + "]";
      const json& s = j["samples"][i];
      if (!s.is_object()) {
        complain(where, "expected an object");
        continue;
      }
      ManifestSample ms;
      bool ok = true;
      if (!s.contains("image_path") || !s["image_path"].is_string()) {
        complain(where + ".image_path", "expected a string");
        ok = false;
      } else {
        ms.image_path = s["image_path"].get<std::string>();
        if (!fs::exists(m.base_dir / ms.image_path))
          complain(where + ".image_path", "file does not exist: " + ms.image_path);
      }
      if (!s.contains("label_id") || !s["label_id"].is_number_integer()) {
        complain(where + ".label_id", "expected an integer");
        ok = false;
      } else {
        ms.label_id = s["label_id"].get<int>();
        if (ncls > 0 && (ms.label_id < 0 || ms.label_id >= ncls))
          complain(where + ".label_id", std::to_string(ms.label_id) + " out of range [0, " +
                                            std::to_string(ncls) + ")");
      }
      if (s.contains("mask_path")) {
        if (!s["mask_path"].is_string()) {
          complain(where + ".mask_path", "expected a string");
        } else {
          ms.mask_path = s["mask_path"].get<std::string>();
          if (!fs::exists(m.base_dir / *ms.mask_path))
            complain(where + ".mask_path", "file does not exist: " + *ms.mask_path);
        }
      }
      if (!s.contains("partition") || !s["partition"].is_string() ||
          (s["partition"] != "train" && s["partition"] != "test")) {
        complain(where + ".partition", "expected \"train\" or \"test\"");
        ok = false;
      } else {
        ms.partition = s["partition"].get<std::string>();
      }
      if (ok) m.samples.push_back(std::move(ms));
    }
  }

  if (!violations.empty()) {
    std::ostringstream os;
    os << "manifest " << path << " failed validation with " << violations.size()
       << " violation(s):";
    for (const auto& v : violations) os << "\n  " << v;
    throw ConfigError(os.str());
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  json samples = json::array();
  for (const auto& s : manifest.samples) {
    json js{{"image_path", s.image_path},
            {"label_id", s.label_id},
            {"partition", s.partition}};
    if (s.mask_path) js["mask_path"] = *s.mask_path;
    samples.push_back(std::move(js));
  }
  json j{{"version", manifest.version},
         {"class_names", manifest.class_names},
         {"samples", std::move(samples)}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write manifest: " + path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("failed while writing manifest: " + path);
}

// ---------------------------------------------------------------------------
// Splits

void SplitConfig::validate() const {
  if (in_set.empty()) throw ConfigError("split '" + name + "': in_set must be nonempty");
  std::set<int> seen;
  for (int c : in_set) {
    if (c < 0) throw ConfigError("split '" + name + "': negative class id " + std::to_string(c));
    if (!seen.insert(c).second)
      throw ConfigError("split '" + name + "': class " + std::to_string(c) +
                        " listed twice in in_set");
  }
  for (int c : out_of_set) {
    if (c < 0) throw ConfigError("split '" + name + "': negative class id " + std::to_string(c));
    if (!seen.insert(c).second)
      throw ConfigError("split '" + name + "': class " + std::to_string(c) +
                        " appears in both in_set and out_of_set (or twice)");
  }
}

void SplitConfig::validate_against(const DatasetManifest& manifest) const {
  validate();
  const int ncls = manifest.num_classes();
  for (int c : in_set)
    if (c >= ncls)
      throw ConfigError("split '" + name + "': in-set class " + std::to_string(c) +
                        " is not a manifest class (manifest has " + std::to_string(ncls) + ")");
  for (int c : out_of_set)
    if (c >= ncls)
      throw ConfigError("split '" + name + "': out-of-set class " + std::to_string(c) +
                        " is not a manifest class (manifest has " + std::to_string(ncls) + ")");
  std::set<int> present;
  for (const auto& s : manifest.samples) present.insert(s.label_id);
  for (int c : in_set)
    if (!present.count(c))
      throw ConfigError("split '" + name + "': in-set class " + std::to_string(c) +
                        " has no samples in the manifest");
}

namespace {

struct PresetTable {
  std::string name;
  std::vector<int> in_set;
  std::vector<int> out_of_set;
};

// In-set / out-of-set id lists in the published order; the first entry of
// each list is the one swapped to derive the shifted variants G5..G9.
const std::vector<PresetTable>& editing_presets() {
  static const std::vector<PresetTable> base = {
      {"G0", {0, 2, 3, 5, 6, 7, 8, 9, 13, 14, 15}, {1, 4, 10, 11, 12, 16, 17, 18}},
      {"G1", {0, 1, 2, 5, 6, 13, 14, 15, 16, 17, 18}, {4, 3, 7, 8, 9, 10, 11, 12}},
      {"G2", {0, 1, 2, 5, 6, 7, 8, 9, 10, 11, 12}, {4, 3, 13, 14, 15, 16, 17, 18}},
      {"G3", {0, 1, 2, 3, 4, 11, 12, 13, 14, 15, 18}, {5, 6, 7, 8, 9, 10, 16, 17}},
      {"G4", {0, 1, 3, 4, 6, 10, 12, 15, 16, 17, 18}, {2, 5, 7, 8, 9, 11, 13, 14}},
  };
  static const std::vector<PresetTable> all = [] {
    std::vector<PresetTable> v = base;
    for (std::size_t i = 0; i < base.size(); ++i) {
      PresetTable p = base[i];
      p.name = "G" + std::to_string(i + 5);
      std::swap(p.in_set.front(), p.out_of_set.front());
      v.push_back(std::move(p));
    }
    v.push_back({"S1", {0, 1, 3}, {2, 4}});
    v.push_back({"S2", {1, 2, 4}, {0, 3}});
    v.push_back({"S3", {0, 1, 2}, {3, 4}});
    v.push_back({"S4", {0, 1, 4}, {2, 3}});
    return v;
  }();
  return all;
}

}  // namespace

SplitConfig preset_split(const std::string& name) {
  for (const auto& p : editing_presets()) {
    if (p.name == name) return SplitConfig{p.name, p.in_set, p.out_of_set};
  }
  throw ConfigError("unknown split preset '" + name + "'");
}

std::vector<std::string> preset_split_names() {
  std::vector<std::string> out;
  for (const auto& p : editing_presets()) out.push_back(p.name);
  return out;
}

SplitResult make_split(const DatasetManifest& manifest, const SplitConfig& cfg) {
  cfg.validate_against(manifest);
  SplitResult res;
  res.name = cfg.name;
  res.in_set = cfg.in_set;
  std::sort(res.in_set.begin(), res.in_set.end());
  res.num_classes = static_cast<int>(res.in_set.size());

  std::map<int, int> remap;  // original id -> contiguous label, order-preserving
  for (std::size_t i = 0; i < res.in_set.size(); ++i) remap[res.in_set[i]] = static_cast<int>(i);
  std::set<int> out_ids(cfg.out_of_set.begin(), cfg.out_of_set.end());

  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const ManifestSample& s = manifest.samples[i];
    auto it = remap.find(s.label_id);
    if (it != remap.end()) {
      if (s.partition == "train")
        res.closed_train.push_back({static_cast<int>(i), it->second});
      else
        res.closed_test.push_back({static_cast<int>(i), it->second});
    } else if (out_ids.count(s.label_id) && s.partition == "test") {
      res.open_test.push_back({static_cast<int>(i), s.label_id});
    }
  }
  if (res.open_test.empty())
    res.warnings.push_back("split '" + cfg.name + "' produced an empty open test set" +
                           (cfg.out_of_set.empty() ? " (no out-of-set classes configured)" : ""));
  return res;
}

LabeledSet load_samples(const DatasetManifest& manifest, const std::vector<SplitSample>& samples,
                        bool with_masks) {
  LabeledSet set;
  for (const SplitSample& ss : samples) {
    const ManifestSample& ms = manifest.samples[static_cast<std::size_t>(ss.manifest_index)];
    set.images.push_back(read_image_rgb(manifest.base_dir / ms.image_path));
    set.labels.push_back(ss.label);
    set.ids.push_back(ms.image_path);
    if (with_masks) {
      if (!ms.mask_path)
        throw ConfigError("sample " + ms.image_path +
                          " has no mask but the run requires localization masks");
      set.masks.push_back(read_mask(manifest.base_dir / *ms.mask_path));
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Synthetic sandbox

void SyntheticGenConfig::validate() const {
  if (num_classes < 4)
    throw ConfigError("SyntheticGenConfig: num_classes must be >= 4 so nontrivial splits exist");
  if (samples_per_class < 1) throw ConfigError("SyntheticGenConfig: samples_per_class must be >= 1");
  if (image_size < 16) throw ConfigError("SyntheticGenConfig: image_size must be >= 16");
  if (manipulation_strength <= 0)
    throw ConfigError("SyntheticGenConfig: manipulation_strength must be positive");
  if (texture_noise < 0) throw ConfigError("SyntheticGenConfig: texture_noise must be >= 0");
}

namespace {

struct Rgb {
  double r, g, b;
};

const Rgb kPalette[] = {
    {0.85, 0.15, 0.15}, {0.10, 0.80, 0.20}, {0.15, 0.25, 0.90}, {0.92, 0.85, 0.10},
    {0.85, 0.10, 0.80}, {0.10, 0.80, 0.85}, {0.95, 0.55, 0.10}, {0.50, 0.15, 0.85},
    {0.20, 0.45, 0.15}, {0.70, 0.35, 0.35}, {0.25, 0.60, 0.60}, {0.80, 0.70, 0.45},
};

bool in_region(int shape, double dx, double dy, double r) {
  const double d2 = dx * dx + dy * dy;
  switch (shape) {
    case 0:  // disc
      return d2 <= r * r;
    case 1:  // square
      return std::max(std::abs(dx), std::abs(dy)) <= 0.9 * r;
    case 2:  // ring
      return d2 <= r * r && d2 >= 0.45 * 0.45 * r * r;
    default:  // diamond
      return std::abs(dx) + std::abs(dy) <= 1.2 * r;
  }
}

}  // namespace

DatasetManifest generate_synthetic(const SyntheticGenConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  fs::create_directories(root / "masks", ec);
  if (!fs::is_directory(root / "images") || !fs::is_directory(root / "masks"))
    throw IoError("cannot create dataset directories under " + out_dir);

  const int s = cfg.image_size;
  const double size = static_cast<double>(s);

  DatasetManifest manifest;
  manifest.version = "1";
  manifest.base_dir = root;
  manifest.class_names.push_back("none");
  for (int c = 1; c < cfg.num_classes; ++c) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "edit%02d", c);
    manifest.class_names.push_back(buf);
  }

  const int n_train = static_cast<int>(std::lround(0.8 * cfg.samples_per_class));
  for (int c = 0; c < cfg.num_classes; ++c) {
    for (int i = 0; i < cfg.samples_per_class; ++i) {
      const std::uint64_t sample_index =
          static_cast<std::uint64_t>(c) * cfg.samples_per_class + i;
      Rng rng(cfg.seed, sample_index);

      // Background texture: tinted base plus two low-frequency waves.
      Tensor img({static_cast<std::size_t>(s), static_cast<std::size_t>(s), 3});
      double base[3];
      for (double& v : base) v = 0.45 + rng.uniform(-0.08, 0.08);
      double fx1 = rng.uniform(0.5, 2.5), fy1 = rng.uniform(0.5, 2.5), ph1 = rng.uniform(0, 6.28);
      double fx2 = rng.uniform(0.5, 2.5), fy2 = rng.uniform(0.5, 2.5), ph2 = rng.uniform(0, 6.28);
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          const double w1 = 0.06 * std::sin(6.283185307179586 * (fx1 * x + fy1 * y) / size + ph1);
          const double w2 = 0.06 * std::sin(6.283185307179586 * (fx2 * x + fy2 * y) / size + ph2);
          for (int ch = 0; ch < 3; ++ch) {
            img.at(y, x, ch) =
                std::clamp(base[ch] + w1 + w2 + rng.normal(0.0, cfg.texture_noise), 0.0, 1.0);
          }
        }
      }

      Tensor mask({static_cast<std::size_t>(s), static_cast<std::size_t>(s)});
      if (c > 0) {
        // Class-specific region on a ring around the image centre.
        const double angle = 6.283185307179586 * (c - 1) / (cfg.num_classes - 1);
        const double cx = size / 2 + 0.30 * size * std::cos(angle) + rng.uniform(-0.02, 0.02) * size;
        const double cy = size / 2 + 0.30 * size * std::sin(angle) + rng.uniform(-0.02, 0.02) * size;
        const double radius = 0.14 * size;
        const int shape = (c - 1) % 4;
        const int pattern = (c - 1) % 3;
        const Rgb color = kPalette[(c - 1) % (sizeof(kPalette) / sizeof(kPalette[0]))];
        const double freq = 3.0 + (c % 4);
        const double alpha = std::clamp(cfg.manipulation_strength, 0.0, 1.0);
        for (int y = 0; y < s; ++y) {
          for (int x = 0; x < s; ++x) {
            if (!in_region(shape, x - cx, y - cy, radius)) continue;
            mask.at(y, x) = 1.0;
            double pr = color.r, pg = color.g, pb = color.b;
            if (pattern == 1) {
              const double v = 0.5 + 0.5 * std::sin(6.283185307179586 * freq * (x - cx) / size);
              pr *= v;
              pg *= v;
              pb *= v;
            } else if (pattern == 2) {
              const int block = 2 + (c % 3);
              if (((x / block) + (y / block)) % 2 == 0) {
                pr = 1.0 - pr;
                pg = 1.0 - pg;
                pb = 1.0 - pb;
              }
            }
            img.at(y, x, 0) = std::clamp((1 - alpha) * img.at(y, x, 0) + alpha * pr, 0.0, 1.0);
            img.at(y, x, 1) = std::clamp((1 - alpha) * img.at(y, x, 1) + alpha * pg, 0.0, 1.0);
            img.at(y, x, 2) = std::clamp((1 - alpha) * img.at(y, x, 2) + alpha * pb, 0.0, 1.0);
          }
        }
      }

      char img_name[64], mask_name[64];
      std::snprintf(img_name, sizeof(img_name), "images/c%02d_%04d.png", c, i);
      std::snprintf(mask_name, sizeof(mask_name), "masks/c%02d_%04d.png", c, i);
      write_image_rgb(img, root / img_name);
      write_mask(mask, root / mask_name);

      ManifestSample ms;
      ms.image_path = img_name;
      ms.mask_path = mask_name;
      ms.label_id = c;
      ms.partition = i < n_train ? "train" : "test";
      manifest.samples.push_back(std::move(ms));
    }
  }
  save_manifest(manifest, (root / "manifest.json").string());
  return manifest;
}

// ---------------------------------------------------------------------------
// Mask pooling

Tensor prepare_mask(const Tensor& mask, int feature_height, int feature_width) {
  if (mask.rank() != 2)
    throw ConfigError("prepare_mask: mask must be rank 2, got " + mask.shape_str());
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  const std::size_t hf = static_cast<std::size_t>(feature_height);
  const std::size_t wf = static_cast<std::size_t>(feature_width);
  if (hf == 0 || wf == 0 || h % hf != 0 || w % wf != 0)
    throw ConfigError("prepare_mask: mask size " + std::to_string(h) + "x" + std::to_string(w) +
                      " is not divisible by the feature grid " + std::to_string(feature_height) +
                      "x" + std::to_string(feature_width));
  const std::size_t by = h / hf, bx = w / wf;
  Tensor out({hf, wf});
  for (std::size_t oy = 0; oy < hf; ++oy) {
    for (std::size_t ox = 0; ox < wf; ++ox) {
      double acc = 0.0;
      for (std::size_t y = 0; y < by; ++y)
        for (std::size_t x = 0; x < bx; ++x) acc += mask.at(oy * by + y, ox * bx + x);
      out.at(oy, ox) = acc / static_cast<double>(by * bx);
    }
  }
  return out;
}

}  // namespace osr
