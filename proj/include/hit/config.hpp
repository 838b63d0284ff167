#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace hit {

/// Every tunable constant of the pipeline. Defaults follow the published
/// method where it states one.
struct PipelineConfig {
  // raster / segmentation
  int patch_size = 1024;
  int stride = 768;
  double threshold = 0.5;
  int downsample = 1;
  std::string segmenter = "oracle";
  std::string segmenter_model;

  // extraction
  int connectivity = 8;
  int min_area_px = 1000;
  int margin_px = 32;

  // embeddings
  std::string encoder_tag = "hit-baseline-v1";
  int resize = 224;
  int embedding_dim = 512;
  int max_instances = 1000;
  int grid_tile = 224;
  double grid_tissue_fraction = 0.5;

  // contrastive
  double cl_margin = 0.75;
  int cl_projection_dim = 128;
  int cl_hidden_dim = 256;
  int cl_batch_size = 128;
  double cl_learning_rate = 1e-3;
  int cl_epochs = 25;
  std::vector<int> cl_checkpoints{1, 3, 5, 25};
  int cl_views = 2;

  // clustering
  int k_min = 2;
  int k_max = 20;
  std::string linkage = "ward";
  std::string cluster_criterion = "ch";  // "ch" or "ratio"
  int knn_k = 3;

  // MIL
  std::vector<int> mil_batch_sizes{4, 8};
  std::vector<double> mil_learning_rates{1e-4, 1e-3};
  std::vector<int> mil_epochs{8, 16, 32};
  int mil_repeats = 3;
  int mil_test_splits = 5;
  int mil_folds = 5;
  std::string label = "emt";
  std::filesystem::path labels_csv;

  // maps
  double map_alpha = 0.6;
  int map_downsample = 4;

  std::uint64_t seed = 0;
  int threads = 1;

  nlohmann::json to_json() const;

  /// Starts from the defaults and applies `j`. Unknown keys and type errors
  /// are collected with the rest of the validation problems.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);

  /// One message per violated field; empty when valid.
  std::vector<std::string> violations() const;
  /// Throws ConfigError listing every violation.
  void validate() const;

 private:
  std::vector<std::string> parse_errors_;
};

}  // namespace hit
