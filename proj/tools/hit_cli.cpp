// hit: command-line front end for the histology-informed tiling pipeline.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "commands.hpp"
#include "hit/error.hpp"

namespace {

using hit::cli::fs::path;

void print_error(const std::string& kind, int exit_code, const std::string& message) {
  nlohmann::json line{{"error", kind}, {"exit_code", exit_code}, {"message", message}};
  std::cerr << line.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Histology-informed tiling: gland segmentation, extraction, embedding and MIL"};
  app.require_subcommand(1);
  app.fallthrough();

  path config_path;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> labels;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "worker threads (overrides config)")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "random seed (overrides config)");
  app.add_option("--labels", labels, "case label CSV (overrides config)");

  hit::cli::SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate synthetic slides, cohorts or embedding bags");
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--glands", synth.glands, "glands per slide");
  c_synth->add_option("--size", synth.size, "slide width and height in pixels");
  c_synth->add_option("--cases", synth.cases, "number of cases (writes labels.csv)");
  c_synth->add_option("--atypical", synth.atypical, "fraction of atypical glands in positive cases");
  c_synth->add_option("--bags", synth.bags, "generate this many embedding bags instead of slides");
  c_synth->add_option("--dim", synth.dim, "bag instance dimension");
  c_synth->add_option("--witness-rate", synth.witness_rate, "witness fraction in positive bags");
  c_synth->add_option("--min-instances", synth.min_instances, "smallest bag");
  c_synth->add_option("--max-instances", synth.max_instances, "largest bag");

  hit::cli::SegmentArgs segment;
  std::optional<std::string> segmenter, segmenter_model;
  auto* c_segment = app.add_subcommand("segment", "predict compartment probabilities and masks");
  c_segment->add_option("--slides", segment.slides, "directory of slide PNGs")->required();
  c_segment->add_option("--truth", segment.truth, "ground-truth directory (oracle segmenter)");
  c_segment->add_option("--out", segment.out, "output directory")->required();
  c_segment->add_option("--segmenter", segmenter, "oracle, stain or external");
  c_segment->add_option("--segmenter-model", segmenter_model, "model file for the external segmenter");
  c_segment->add_option("--fuse", segment.fuse, "second segmenter whose probabilities are multiplied in");

  hit::cli::ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract", "extract gland instances from masks");
  c_extract->add_option("--slides", extract.slides, "directory of slide PNGs")->required();
  c_extract->add_option("--seg", extract.segmentation, "segment output directory")->required();
  c_extract->add_option("--out", extract.out, "instance output directory")->required();

  hit::cli::EmbedArgs embed;
  std::optional<std::string> encoder;
  auto* c_embed = app.add_subcommand("embed", "encode gland crops (or grid tiles) into embedding stores");
  c_embed->add_option("--slides", embed.slides, "directory of slide PNGs")->required();
  c_embed->add_option("--instances", embed.instances, "extract output directory");
  c_embed->add_option("--out", embed.out, "store output directory")->required();
  c_embed->add_option("--encoder", encoder, "encoder tag");
  c_embed->add_flag("--grid", embed.grid, "encode non-overlapping grid tiles instead of glands");

  hit::cli::ClTrainArgs cl;
  std::optional<int> cl_epochs;
  auto* c_cl = app.add_subcommand("cl-train", "train the triplet-loss projection head");
  c_cl->add_option("--slides", cl.slides, "directory of slide PNGs")->required();
  c_cl->add_option("--instances", cl.instances, "extract output directory")->required();
  c_cl->add_option("--out", cl.out, "checkpoint directory")->required();
  c_cl->add_option("--epochs", cl_epochs, "training epochs");
  c_cl->add_option("--project", cl.project, "stores to project with the trained head");

  hit::cli::ClusterArgs clu;
  auto* c_cluster = app.add_subcommand("cluster", "hierarchical clustering of embeddings");
  c_cluster->add_option("--stores", clu.stores, "embedding store directory")->required();
  c_cluster->add_option("--out", clu.out, "output directory")->required();
  c_cluster->add_option("-k,--k", clu.k, "cluster count (default: select by variance ratio)");
  c_cluster->add_option("--regions", clu.regions, "CSV slide_id,gland_id,region of annotations");

  hit::cli::MilTrainArgs mt;
  auto* c_mt = app.add_subcommand("mil-train", "train one MIL head on all bags");
  c_mt->add_option("--stores", mt.stores, "embedding store directory")->required();
  c_mt->add_option("--out", mt.out, "head file")->required();
  c_mt->add_option("--head", mt.head, "gated or paw");
  c_mt->add_option("--batch", mt.batch_size, "bags per step");
  c_mt->add_option("--lr", mt.learning_rate, "learning rate");
  c_mt->add_option("--epochs", mt.epochs, "epochs");

  hit::cli::MilBenchArgs mb;
  auto* c_mb = app.add_subcommand("mil-bench", "cross-validated MIL benchmark with hyperparameter sweep");
  c_mb->add_option("--arm", mb.arms, "tiling_mode=store_dir (repeatable)")->required();
  c_mb->add_option("--out", mb.out, "output directory")->required();
  c_mb->add_option("--heads", mb.heads, "heads to benchmark");
  c_mb->add_flag("--shuffle-labels", mb.shuffle_labels, "permutation-null control");

  hit::cli::ScoreArgs sc;
  auto* c_score = app.add_subcommand("score", "ensemble instance scores from trained PAW heads");
  c_score->add_option("--models", sc.models, "directory of PAW head files")->required();
  c_score->add_option("--stores", sc.stores, "embedding store directory")->required();
  c_score->add_option("--out", sc.out, "output CSV")->required();

  hit::cli::RenderArgs rn;
  auto* c_render = app.add_subcommand("render", "paint cluster or score maps");
  c_render->add_option("--slides", rn.slides, "directory of slide PNGs")->required();
  c_render->add_option("--instances", rn.instances, "extract output directory")->required();
  c_render->add_option("--clusters", rn.clusters, "assignments.csv from cluster");
  c_render->add_option("--scores", rn.scores, "CSV from score");
  c_render->add_option("--value", rn.value, "category or mean");
  c_render->add_option("--out", rn.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    print_error("UsageError", 2, e.what());
    return 2;
  }

  try {
    auto config = config_path.empty() ? hit::PipelineConfig{} : hit::PipelineConfig::load(config_path);
    if (threads) config.threads = *threads;
    if (seed) config.seed = *seed;
    if (labels) config.labels_csv = *labels;
    if (segmenter) config.segmenter = *segmenter;
    if (segmenter_model) config.segmenter_model = *segmenter_model;
    if (encoder) config.encoder_tag = *encoder;
    if (cl_epochs) config.cl_epochs = *cl_epochs;
    config.validate();

    if (c_synth->parsed()) hit::cli::run_synth(config, synth);
    else if (c_segment->parsed()) hit::cli::run_segment(config, segment);
    else if (c_extract->parsed()) hit::cli::run_extract(config, extract);
    else if (c_embed->parsed()) hit::cli::run_embed(config, embed);
    else if (c_cl->parsed()) hit::cli::run_cl_train(config, cl);
    else if (c_cluster->parsed()) hit::cli::run_cluster(config, clu);
    else if (c_mt->parsed()) hit::cli::run_mil_train(config, mt);
    else if (c_mb->parsed()) hit::cli::run_mil_bench(config, mb);
    else if (c_score->parsed()) hit::cli::run_score(config, sc);
    else if (c_render->parsed()) hit::cli::run_render(config, rn);
  } catch (const hit::Error& e) {
    const int code = hit::exit_code_for(e.code());
    print_error(std::string(hit::errc_name(e.code())), code, e.what());
    return code;
  } catch (const std::exception& e) {
    print_error("IoError", 3, e.what());
    return 3;
  }
  return 0;
}
