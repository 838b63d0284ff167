#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hit/config.hpp"

namespace hit::cli {

namespace fs = std::filesystem;

struct SynthArgs {
  fs::path out;
  int glands = 12;
  int size = 2048;
  int cases = 0;  // > 0: cohort of slides plus labels.csv
  double atypical = 0.4;
  int bags = 0;   // > 0: synthetic embedding bags instead of slides
  int dim = 64;
  double witness_rate = 0.1;
  int min_instances = 8;
  int max_instances = 12;
};

struct SegmentArgs {
  fs::path slides;
  fs::path truth;
  fs::path out;
  std::string fuse;  // second segmenter whose probabilities are averaged in
};

struct ExtractArgs {
  fs::path slides;
  fs::path segmentation;
  fs::path out;
};

struct EmbedArgs {
  fs::path slides;
  fs::path instances;
  fs::path out;
  bool grid = false;
};

struct ClTrainArgs {
  fs::path slides;
  fs::path instances;
  fs::path out;
  fs::path project;  // stores to project with the final head
};

struct ClusterArgs {
  fs::path stores;
  fs::path out;
  int k = 0;  // 0: select by variance ratio
  fs::path regions;
};

struct MilTrainArgs {
  fs::path stores;
  fs::path out;
  std::string head = "paw";
  int batch_size = 4;
  double learning_rate = 1e-4;
  int epochs = 8;
};

struct MilBenchArgs {
  std::vector<std::string> arms;  // mode=dir
  fs::path out;
  std::vector<std::string> heads{"gated", "paw"};
  bool shuffle_labels = false;
};

struct ScoreArgs {
  fs::path models;
  fs::path stores;
  fs::path out;
};

struct RenderArgs {
  fs::path slides;
  fs::path instances;
  fs::path clusters;
  fs::path scores;
  fs::path out;
  std::string value = "category";  // or "mean"
};

void run_synth(const PipelineConfig& config, const SynthArgs& args);
void run_segment(const PipelineConfig& config, const SegmentArgs& args);
void run_extract(const PipelineConfig& config, const ExtractArgs& args);
void run_embed(const PipelineConfig& config, const EmbedArgs& args);
void run_cl_train(const PipelineConfig& config, const ClTrainArgs& args);
void run_cluster(const PipelineConfig& config, const ClusterArgs& args);
void run_mil_train(const PipelineConfig& config, const MilTrainArgs& args);
void run_mil_bench(const PipelineConfig& config, const MilBenchArgs& args);
void run_score(const PipelineConfig& config, const ScoreArgs& args);
void run_render(const PipelineConfig& config, const RenderArgs& args);

}  // namespace hit::cli
