#include "hit/config.hpp"

#include <set>

#include "hit/error.hpp"
#include "hit/image_io.hpp"

namespace hit {

namespace {

using json = nlohmann::json;

// Binds each key to a member so reading and writing share one table.
template <class F>
void for_each_field(PipelineConfig& c, F&& f) {
  f("patch_size", c.patch_size);
  f("stride", c.stride);
  f("threshold", c.threshold);
  f("downsample", c.downsample);
  f("segmenter", c.segmenter);
  f("segmenter_model", c.segmenter_model);
  f("connectivity", c.connectivity);
  f("min_area_px", c.min_area_px);
  f("margin_px", c.margin_px);
  f("encoder_tag", c.encoder_tag);
  f("resize", c.resize);
  f("embedding_dim", c.embedding_dim);
  f("max_instances", c.max_instances);
  f("grid_tile", c.grid_tile);
  f("grid_tissue_fraction", c.grid_tissue_fraction);
  f("cl_margin", c.cl_margin);
  f("cl_projection_dim", c.cl_projection_dim);
  f("cl_hidden_dim", c.cl_hidden_dim);
  f("cl_batch_size", c.cl_batch_size);
  f("cl_learning_rate", c.cl_learning_rate);
  f("cl_epochs", c.cl_epochs);
  f("cl_checkpoints", c.cl_checkpoints);
  f("cl_views", c.cl_views);
  f("k_min", c.k_min);
  f("k_max", c.k_max);
  f("linkage", c.linkage);
  f("cluster_criterion", c.cluster_criterion);
  f("knn_k", c.knn_k);
  f("mil_batch_sizes", c.mil_batch_sizes);
  f("mil_learning_rates", c.mil_learning_rates);
  f("mil_epochs", c.mil_epochs);
  f("mil_repeats", c.mil_repeats);
  f("mil_test_splits", c.mil_test_splits);
  f("mil_folds", c.mil_folds);
  f("label", c.label);
  f("labels_csv", c.labels_csv);
  f("map_alpha", c.map_alpha);
  f("map_downsample", c.map_downsample);
  f("seed", c.seed);
  f("threads", c.threads);
}

}  // namespace

json PipelineConfig::to_json() const {
  json j = json::object();
  auto copy = *this;
  for_each_field(copy, [&](const char* key, auto& value) {
    if constexpr (std::is_same_v<std::decay_t<decltype(value)>, std::filesystem::path>) {
      j[key] = value.string();
    } else {
      j[key] = value;
    }
  });
  return j;
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  if (!j.is_object()) {
    c.parse_errors_.push_back("config: expected a JSON object");
    return c;
  }
  std::set<std::string> known;
  for_each_field(c, [&](const char* key, auto& value) {
    known.insert(key);
    if (!j.contains(key)) return;
    try {
      using T = std::decay_t<decltype(value)>;
      if constexpr (std::is_same_v<T, std::filesystem::path>) {
        value = j.at(key).get<std::string>();
      } else {
        value = j.at(key).get<T>();
      }
    } catch (const json::exception&) {
      c.parse_errors_.push_back(std::string(key) + ": wrong type (" + j.at(key).dump() + ")");
    }
  });
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) c.parse_errors_.push_back(key + ": unknown key");
  }
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    fail(Errc::ConfigError, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::vector<std::string> PipelineConfig::violations() const {
  std::vector<std::string> v = parse_errors_;
  auto check = [&](bool ok, const std::string& message) {
    if (!ok) v.push_back(message);
  };
  check(patch_size > 0, "patch_size: must be > 0");
  check(stride > 0 && stride <= patch_size, "stride: must lie in [1, patch_size]");
  check(threshold > 0.0 && threshold < 1.0, "threshold: must lie in (0, 1)");
  check(downsample == 1 || downsample == 2 || downsample == 4, "downsample: must be 1, 2 or 4");
  check(segmenter == "oracle" || segmenter == "stain" || segmenter == "external",
        "segmenter: must be oracle, stain or external");
  check(segmenter != "external" || !segmenter_model.empty(), "segmenter_model: required for the external segmenter");
  check(connectivity == 4 || connectivity == 8, "connectivity: must be 4 or 8");
  check(min_area_px >= 1, "min_area_px: must be >= 1");
  check(margin_px >= 0, "margin_px: must be >= 0");
  check(!encoder_tag.empty(), "encoder_tag: must not be empty");
  check(resize == 224, "resize: the encoders take 224 x 224 input");
  check(embedding_dim == 512, "embedding_dim: the encoders emit 512 values");
  check(max_instances >= 1, "max_instances: must be >= 1");
  check(grid_tile >= 8, "grid_tile: must be >= 8");
  check(grid_tissue_fraction >= 0.0 && grid_tissue_fraction <= 1.0, "grid_tissue_fraction: must lie in [0, 1]");
  check(cl_margin >= 0.0, "cl_margin: must be >= 0");
  check(cl_projection_dim >= 1, "cl_projection_dim: must be >= 1");
  check(cl_hidden_dim >= 1, "cl_hidden_dim: must be >= 1");
  check(cl_batch_size >= 2, "cl_batch_size: must be >= 2");
  check(cl_learning_rate > 0.0, "cl_learning_rate: must be > 0");
  check(cl_epochs >= 0, "cl_epochs: must be >= 0");
  check(cl_views >= 2, "cl_views: must be >= 2");
  for (int e : cl_checkpoints) check(e >= 1, "cl_checkpoints: epochs must be >= 1");
  check(k_min >= 2 && k_max >= k_min, "k_min/k_max: need 2 <= k_min <= k_max");
  check(linkage == "ward" || linkage == "single" || linkage == "complete" || linkage == "average",
        "linkage: must be ward, single, complete or average");
  check(cluster_criterion == "ch" || cluster_criterion == "ratio", "cluster_criterion: must be ch or ratio");
  check(knn_k >= 1, "knn_k: must be >= 1");
  check(!mil_batch_sizes.empty(), "mil_batch_sizes: must not be empty");
  for (int b : mil_batch_sizes) check(b >= 1, "mil_batch_sizes: entries must be >= 1");
  check(!mil_learning_rates.empty(), "mil_learning_rates: must not be empty");
  for (double lr : mil_learning_rates) check(lr > 0.0, "mil_learning_rates: entries must be > 0");
  check(!mil_epochs.empty(), "mil_epochs: must not be empty");
  for (int e : mil_epochs) check(e >= 1, "mil_epochs: entries must be >= 1");
  check(mil_repeats >= 1, "mil_repeats: must be >= 1");
  check(mil_test_splits >= 2, "mil_test_splits: must be >= 2");
  check(mil_folds >= 2, "mil_folds: must be >= 2");
  check(label == "bcr" || label == "emt" || label == "myc", "label: must be bcr, emt or myc");
  check(labels_csv.empty() || std::filesystem::exists(labels_csv),
        "labels_csv: '" + labels_csv.string() + "' does not exist");
  check(map_alpha >= 0.0 && map_alpha <= 1.0, "map_alpha: must lie in [0, 1]");
  check(map_downsample >= 1, "map_downsample: must be >= 1");
  check(threads >= 1, "threads: must be >= 1");
  return v;
}

void PipelineConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string message = "invalid configuration (" + std::to_string(v.size()) + " problem" +
                        (v.size() == 1 ? "" : "s") + "): ";
  for (std::size_t i = 0; i < v.size(); ++i) message += (i ? "; " : "") + v[i];
  fail(Errc::ConfigError, message);
}

}  // namespace hit
