#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "hit/clustering.hpp"
#include "hit/contrastive.hpp"
#include "hit/embeddings.hpp"
#include "hit/gland_extraction.hpp"
#include "hit/image_io.hpp"
#include "hit/maps.hpp"
#include "hit/mil.hpp"
#include "hit/segmenters.hpp"
#include "hit/synth.hpp"

namespace hit::cli {

namespace {

using json = nlohmann::json;

constexpr const char* kStoreExt = ".hitemb";
constexpr const char* kParamExt = ".hitparam";

std::vector<fs::path> files_with(const fs::path& dir, const std::string& ext) {
  require(fs::is_directory(dir), Errc::IoError, "'" + dir.string() + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> slide_files(const fs::path& dir) { return files_with(dir, ".png"); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void say(const std::string& line) { std::cout << line << '\n'; }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) cells.push_back(cell);
  if (!line.empty() && line.back() == sep) cells.emplace_back();
  return cells;
}

/// Rows of a headed CSV as column-name -> value maps.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header.empty()) {
      header = split(line, ',');
      continue;
    }
    const auto cells = split(line, ',');
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = i < cells.size() ? cells[i] : "";
    rows.push_back(std::move(row));
  }
  return rows;
}

const std::string& column(const std::map<std::string, std::string>& row, const std::string& name,
                          const fs::path& path) {
  auto it = row.find(name);
  require(it != row.end(), Errc::FormatError, "'" + path.string() + "' lacks column '" + name + "'");
  return it->second;
}

std::vector<EmbeddingStore> read_stores(const fs::path& dir) {
  std::vector<EmbeddingStore> stores;
  for (const auto& p : files_with(dir, kStoreExt)) stores.push_back(read_store(p));
  require(!stores.empty(), Errc::IoError, "no embedding stores in '" + dir.string() + "'");
  return stores;
}

std::vector<EmbeddingBag> bags_from(const PipelineConfig& config, const fs::path& stores_dir) {
  require(!config.labels_csv.empty(), Errc::ConfigError, "labels_csv: required for MIL commands (--labels)");
  const auto table = LabelTable::read_csv(config.labels_csv);
  std::vector<std::string> warnings;
  auto bags = assemble_bags(read_stores(stores_dir), table, parse_label_kind(config.label),
                            static_cast<std::size_t>(config.max_instances), config.seed, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  return bags;
}

CompartmentMaskSet load_truth(const fs::path& truth_dir, const std::string& slide_id, BinaryPlane* nuclei) {
  const auto dir = truth_dir / slide_id;
  *nuclei = io::read_png_mask(dir / "nuclei.png");
  return io::load_mask_set(dir);
}

std::unique_ptr<Segmenter> make_segmenter(const PipelineConfig& config, const std::string& kind,
                                          const fs::path& truth_dir, const std::string& slide_id) {
  switch (parse_segmenter_kind(kind)) {
    case SegmenterKind::Oracle: {
      require(!truth_dir.empty(), Errc::ConfigError, "the oracle segmenter needs --truth");
      BinaryPlane nuclei;
      auto truth = load_truth(truth_dir, slide_id, &nuclei);
      return std::make_unique<OracleSegmenter>(std::move(truth), std::move(nuclei), config.patch_size);
    }
    case SegmenterKind::StainHeuristic:
      return std::make_unique<StainHeuristicSegmenter>(StainHeuristicParams{}, config.patch_size);
    case SegmenterKind::External:
      return std::make_unique<ExternalSegmenter>(config.segmenter_model, config.patch_size);
  }
  fail(Errc::ConfigError, "unknown segmenter '" + kind + "'");
}

BinaryPlane threshold_plane(const ProbPlane& p, double threshold) {
  BinaryPlane out(p.width(), p.height(), 0);
  for (std::size_t i = 0; i < p.size(); ++i) out.values()[i] = p.values()[i] > threshold ? 1 : 0;
  return out;
}

ExtractionOptions extraction_options(const PipelineConfig& config) {
  ExtractionOptions o;
  o.connectivity = config.connectivity;
  o.min_area_px = config.min_area_px;
  o.margin_px = config.margin_px;
  o.threads = config.threads;
  return o;
}

/// Raw H&E crops plus recorded morphometrics for every instance of a slide.
struct SlideInstances {
  std::string slide_id;
  std::vector<EncoderInput> inputs;
  std::vector<int> gland_ids;
  std::vector<BoundingBox> bboxes;
};

SlideInstances load_instances(const SlideRaster& slide, const fs::path& instances_dir) {
  SlideInstances s;
  s.slide_id = slide.slide_id();
  for (const auto& e : read_manifest(instances_dir / slide.slide_id())) {
    s.inputs.push_back({slide.image().crop(e.bbox.x, e.bbox.y, e.bbox.w, e.bbox.h), e.morphometrics});
    s.gland_ids.push_back(e.gland_id);
    s.bboxes.push_back(e.bbox);
  }
  return s;
}

/// Instances rebuilt from exported masks, enough for rendering.
std::vector<GlandInstance> load_gland_masks(const fs::path& slide_dir, const std::string& slide_id) {
  std::vector<GlandInstance> out;
  for (const auto& e : read_manifest(slide_dir)) {
    GlandInstance g;
    g.gland_id = e.gland_id;
    g.slide_id = slide_id;
    g.downsample = e.downsample;
    g.bbox = e.bbox;
    g.tight_bbox = e.tight_bbox;
    g.mask_bbox = e.mask_bbox;
    g.component = io::read_png_mask(slide_dir / e.mask_file);
    g.area_px = e.area_px;
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

// ---- synth ---------------------------------------------------------------------

void run_synth(const PipelineConfig& config, const SynthArgs& args) {
  require(!args.out.empty(), Errc::ConfigError, "synth: --out is required");
  fs::create_directories(args.out);
  if (args.bags > 0) {
    synth::BagOptions o;
    o.n_bags = args.bags;
    o.dim = args.dim;
    o.witness_rate = args.witness_rate;
    o.min_instances = args.min_instances;
    o.max_instances = args.max_instances;
    const auto set = synth::synth_bags(config.seed, o);
    LabelTable table;
    std::ostringstream witness;
    witness << "slide_id,gland_id,witness\n";
    fs::create_directories(args.out / "stores");
    for (std::size_t b = 0; b < set.bags.size(); ++b) {
      const auto& bag = set.bags[b];
      EmbeddingStore store;
      store.slide_id = bag.slide_id;
      store.encoder_tag = "synthetic";
      store.vectors = MatrixF(bag.n_valid, bag.dim());
      for (std::size_t i = 0; i < bag.n_valid; ++i) {
        const auto src = bag.instances.row(i);
        std::copy(src.begin(), src.end(), store.vectors.row(i).begin());
        store.gland_ids.push_back(bag.gland_ids[i]);
        store.bboxes.push_back({});
        witness << bag.slide_id << ',' << bag.gland_ids[i] << ',' << int(set.witness[b][i]) << '\n';
      }
      write_store(args.out / "stores" / (bag.slide_id + kStoreExt), store);
      CaseLabels c;
      c.case_id = bag.case_id;
      c.bcr = bag.label;
      for (auto& g : c.gains) g = 0;
      c.gains[static_cast<std::size_t>(Gene::ZEB1)] = bag.label;
      c.gains[static_cast<std::size_t>(Gene::MYC)] = bag.label;
      table.add(std::move(c));
    }
    io::write_text(args.out / "labels.csv", table.to_csv());
    io::write_text(args.out / "witness.csv", witness.str());
    say("synth: wrote " + std::to_string(set.bags.size()) + " bags to " + args.out.string());
    return;
  }

  synth::SlideOptions slide;
  slide.width = args.size;
  slide.height = args.size;
  slide.n_glands = args.glands;
  std::vector<synth::SynthSlide> slides;
  if (args.cases > 0) {
    synth::CohortOptions o;
    o.n_cases = args.cases;
    o.slide = slide;
    o.positive_atypical_fraction = args.atypical;
    auto cohort = synth::synth_cohort(config.seed, o);
    io::write_text(args.out / "labels.csv", cohort.labels.to_csv());
    slides = std::move(cohort.slides);
  } else {
    slide.slide_id = "synth" + std::to_string(config.seed);
    slides.push_back(synth::synth_slide(config.seed, slide));
  }
  for (const auto& s : slides) {
    const auto& id = s.slide.slide_id();
    io::save_slide(args.out / "slides" / (id + ".png"), s.slide);
    const auto truth = args.out / "truth" / id;
    io::save_mask_set(truth, s.truth);
    io::write_png_mask(truth / "nuclei.png", s.nuclei);
    json glands = json::array();
    for (const auto& g : s.glands) {
      glands.push_back({{"cx", g.cx},
                        {"cy", g.cy},
                        {"angle", g.angle},
                        {"outer", {g.outer_a, g.outer_b}},
                        {"inner", {g.inner_a, g.inner_b}},
                        {"atypical", g.atypical},
                        {"gland_area", g.gland_area()},
                        {"lumen_area", g.lumen_area()},
                        {"epithelium_area", g.epithelium_area()}});
    }
    io::write_text(truth / "glands.json", glands.dump(2) + "\n");
  }
  say("synth: wrote " + std::to_string(slides.size()) + " slide(s) to " + args.out.string());
}

// ---- segment -------------------------------------------------------------------

void run_segment(const PipelineConfig& config, const SegmentArgs& args) {
  require(!args.slides.empty() && !args.out.empty(), Errc::ConfigError, "segment: --slides and --out are required");
  std::size_t n = 0;
  for (const auto& path : slide_files(args.slides)) {
    const auto slide = io::load_slide(path);
    const auto& id = slide.slide_id();
    const auto seg = make_segmenter(config, config.segmenter, args.truth, id);
    auto probs = predict_slide(slide, *seg, config.stride, config.downsample, config.threads);
    auto nuclei = predict_slide_nuclei(slide, *seg, config.stride, config.downsample, config.threads);
    if (!args.fuse.empty()) {
      const auto other = make_segmenter(config, args.fuse, args.truth, id);
      probs = fuse_probabilities(probs, predict_slide(slide, *other, config.stride, config.downsample, config.threads));
      nuclei = fuse_probabilities(
          nuclei, predict_slide_nuclei(slide, *other, config.stride, config.downsample, config.threads));
    }
    const auto dir = args.out / id;
    io::save_probability_map(dir / "probabilities", probs);
    io::save_mask_set(dir / "masks", binarize(probs, config.threshold));
    io::write_png_mask(dir / "nuclei.png", threshold_plane(nuclei.plane(TissueClass::Nuclei), config.threshold));
    ++n;
  }
  say("segment: " + std::to_string(n) + " slide(s) with the " + config.segmenter + " segmenter");
}

// ---- extract -------------------------------------------------------------------

void run_extract(const PipelineConfig& config, const ExtractArgs& args) {
  require(!args.slides.empty() && !args.segmentation.empty() && !args.out.empty(), Errc::ConfigError,
          "extract: --slides, --seg and --out are required");
  std::size_t total = 0;
  for (const auto& path : slide_files(args.slides)) {
    const auto slide = io::load_slide(path);
    const auto dir = args.segmentation / slide.slide_id();
    const auto masks = io::load_mask_set(dir / "masks");
    std::optional<BinaryPlane> nuclei;
    if (fs::exists(dir / "nuclei.png")) nuclei = io::read_png_mask(dir / "nuclei.png");
    const auto instances =
        extract_instances(masks, slide, extraction_options(config), nuclei ? &*nuclei : nullptr);
    export_instances(args.out, slide.slide_id(), instances);
    total += instances.size();
  }
  say("extract: " + std::to_string(total) + " gland instance(s)");
}

// ---- embed ---------------------------------------------------------------------

void run_embed(const PipelineConfig& config, const EmbedArgs& args) {
  require(!args.slides.empty() && !args.out.empty(), Errc::ConfigError, "embed: --slides and --out are required");
  require(args.grid || !args.instances.empty(), Errc::ConfigError, "embed: --instances is required unless --grid");
  fs::create_directories(args.out);
  std::size_t total = 0;
  for (const auto& path : slide_files(args.slides)) {
    const auto slide = io::load_slide(path);
    EmbeddingStore store;
    if (args.grid) {
      const auto tiles = grid_tiles(slide, config.grid_tile, config.grid_tissue_fraction);
      std::vector<EncoderInput> inputs;
      std::vector<int> ids;
      std::vector<BoundingBox> boxes;
      for (std::size_t i = 0; i < tiles.size(); ++i) {
        inputs.push_back({tiles[i].pixels, std::nullopt});
        ids.push_back(static_cast<int>(i) + 1);
        boxes.push_back(tiles[i].bbox);
      }
      store = encode_crops(config.encoder_tag, slide.slide_id(), inputs, ids, boxes, config.threads);
    } else {
      const auto s = load_instances(slide, args.instances);
      store = encode_crops(config.encoder_tag, s.slide_id, s.inputs, s.gland_ids, s.bboxes, config.threads);
    }
    write_store(args.out / (slide.slide_id() + kStoreExt), store);
    total += store.size();
  }
  say("embed: " + std::to_string(total) + " vector(s) with " + config.encoder_tag +
      (args.grid ? " (grid tiles)" : ""));
}

// ---- cl-train ------------------------------------------------------------------

void run_cl_train(const PipelineConfig& config, const ClTrainArgs& args) {
  require(!args.slides.empty() && !args.instances.empty() && !args.out.empty(), Errc::ConfigError,
          "cl-train: --slides, --instances and --out are required");
  std::vector<EncoderInput> inputs;
  for (const auto& path : slide_files(args.slides)) {
    auto s = load_instances(io::load_slide(path), args.instances);
    for (auto& in : s.inputs) inputs.push_back(std::move(in));
  }
  require(!inputs.empty(), Errc::EmptySplit, "cl-train: no gland instances found");
  const auto views = cl::build_view_set(inputs, config.encoder_tag, config.cl_views, config.seed, config.threads);
  cl::TrainConfig tc;
  tc.epochs = config.cl_epochs;
  tc.batch_size = static_cast<std::size_t>(config.cl_batch_size);
  tc.learning_rate = config.cl_learning_rate;
  tc.margin = config.cl_margin;
  tc.seed = config.seed;
  tc.checkpoint_epochs = config.cl_checkpoints;
  tc.hidden_dim = static_cast<std::size_t>(config.cl_hidden_dim);
  tc.out_dim = static_cast<std::size_t>(config.cl_projection_dim);
  const auto result = cl::train_projection_head(views, tc);
  fs::create_directories(args.out);
  for (const auto& c : result.checkpoints) {
    cl::save_checkpoint(args.out / ("checkpoint_epoch" + std::to_string(c.epoch) + kParamExt), c,
                        result.standardizer, tc.margin, tc.seed);
  }
  std::ostringstream losses;
  losses << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < result.val_loss.size(); ++e) {
    losses << e << ',' << (e ? fmt(result.train_loss[e]) : "") << ',' << fmt(result.val_loss[e]) << '\n';
  }
  io::write_text(args.out / "losses.csv", losses.str());
  if (!args.project.empty()) {
    fs::create_directories(args.out / "stores");
    for (const auto& p : files_with(args.project, kStoreExt)) {
      const auto projected = cl::project_embeddings(result.final_head, result.standardizer, read_store(p));
      write_store(args.out / "stores" / p.filename(), projected);
    }
  }
  say("cl-train: " + std::to_string(inputs.size()) + " glands, " + std::to_string(tc.epochs) +
      " epoch(s), val loss " + fmt(result.val_loss.front()) + " -> " + fmt(result.val_loss.back()));
}

// ---- cluster -------------------------------------------------------------------

void run_cluster(const PipelineConfig& config, const ClusterArgs& args) {
  require(!args.stores.empty() && !args.out.empty(), Errc::ConfigError, "cluster: --stores and --out are required");
  const auto stores = read_stores(args.stores);
  std::vector<cluster::Assignment> rows;
  std::size_t n = 0;
  for (const auto& s : stores) n += s.size();
  MatrixD x(n, stores.front().dim());
  std::size_t r = 0;
  for (const auto& s : stores) {
    require(s.dim() == x.cols(), Errc::DimMismatch, "stores have different dimensions");
    for (std::size_t i = 0; i < s.size(); ++i, ++r) {
      const auto src = s.vectors.row(i);
      std::copy(src.begin(), src.end(), x.row(r).begin());
      rows.push_back({s.slide_id, std::to_string(s.gland_ids[i]), 0});
    }
  }
  const auto linkage = cluster::parse_linkage(config.linkage);
  const auto criterion =
      config.cluster_criterion == "ratio" ? cluster::SelectionCriterion::RawRatio : cluster::SelectionCriterion::ChIndex;
  const auto tree = cluster::agglomerate(x, linkage);
  std::size_t k = static_cast<std::size_t>(std::max(0, args.k));
  std::vector<cluster::VarianceReport> reports;
  if (k == 0) {
    const auto kmax = std::min<std::size_t>(static_cast<std::size_t>(config.k_max), n - 1);
    const auto sel = cluster::select_cluster_count(tree, x, static_cast<std::size_t>(config.k_min), kmax, criterion);
    k = sel.k;
    reports = sel.reports;
  }
  cluster::ClusterModel model;
  model.tree = tree;
  model.k = k;
  model.labels = cluster::cut(tree, k);
  model.centroids = cluster::centroids_of(x, model.labels, k);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].cluster = model.labels[i];

  fs::create_directories(args.out);
  io::write_text(args.out / "assignments.csv", cluster::assignments_csv(rows));
  io::write_text(args.out / "dendrogram.json", cluster::dendrogram_json(tree).dump() + "\n");
  if (k >= 2) {
    const auto ct = cluster::centroid_dendrogram(model);
    io::write_text(args.out / "centroid_dendrogram.json",
                   json{{"tree", cluster::dendrogram_json(ct.tree)}, {"leaf_order", ct.leaf_order}}.dump(2) + "\n");
  }
  std::ostringstream var;
  var << "k,between,within,ch_index,raw_ratio\n";
  for (const auto& rep : reports) {
    var << rep.k << ',' << fmt(rep.between) << ',' << fmt(rep.within) << ',' << fmt(rep.ch_index) << ','
        << fmt(rep.raw_ratio) << '\n';
  }
  io::write_text(args.out / "variance.csv", var.str());
  const auto xy = cluster::project_2d(x);
  std::ostringstream proj;
  proj << "slide_id,gland_id,cluster,x,y\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    proj << rows[i].slide_id << ',' << rows[i].gland_id << ',' << rows[i].cluster << ',' << fmt(xy(i, 0)) << ','
         << fmt(xy(i, 1)) << '\n';
  }
  io::write_text(args.out / "projection.csv", proj.str());

  if (!args.regions.empty()) {
    std::map<std::pair<std::string, std::string>, std::string> region_of;
    for (const auto& row : read_csv(args.regions)) {
      region_of[{column(row, "slide_id", args.regions), column(row, "gland_id", args.regions)}] =
          column(row, "region", args.regions);
    }
    std::vector<int> labels;
    std::vector<std::string> regions;
    for (const auto& a : rows) {
      auto it = region_of.find({a.slide_id, a.gland_id});
      if (it == region_of.end()) continue;
      labels.push_back(a.cluster);
      regions.push_back(it->second);
    }
    const auto ag = cluster::annotation_agreement(labels, regions);
    std::ostringstream os;
    os << "cluster,region,count,proportion,majority\n";
    for (std::size_t i = 0; i < ag.clusters.size(); ++i)
      for (std::size_t j = 0; j < ag.regions.size(); ++j) {
        os << ag.clusters[i] << ',' << ag.regions[j] << ',' << ag.counts(i, j) << ',' << fmt(ag.proportions(i, j))
           << ',' << ag.majority[i] << '\n';
      }
    io::write_text(args.out / "agreement.csv", os.str());
  }
  say("cluster: " + std::to_string(n) + " vectors into " + std::to_string(k) + " clusters");
}

// ---- MIL -----------------------------------------------------------------------

void run_mil_train(const PipelineConfig& config, const MilTrainArgs& args) {
  require(!args.stores.empty() && !args.out.empty(), Errc::ConfigError, "mil-train: --stores and --out are required");
  const auto bags = mil::to_dense(bags_from(config, args.stores));
  auto head = mil::make_head(mil::parse_head_kind(args.head), bags.front().x.cols(), config.seed);
  const mil::Hyperparams hp{args.batch_size, args.learning_rate, args.epochs};
  const auto history = mil::train_head(*head, bags, hp, derive_seed(config.seed, 2));
  if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
  mil::save_head(args.out, *head,
                 {{"batch_size", hp.batch_size},
                  {"learning_rate", hp.learning_rate},
                  {"epochs", hp.epochs},
                  {"seed", config.seed},
                  {"label", config.label},
                  {"loss", history.loss}});
  say("mil-train: " + args.head + " head, loss " + fmt(history.loss.front()) + " -> " + fmt(history.loss.back()));
}

void run_mil_bench(const PipelineConfig& config, const MilBenchArgs& args) {
  require(!args.arms.empty() && !args.out.empty(), Errc::ConfigError, "mil-bench: --arm and --out are required");
  std::vector<mil::BenchmarkArm> arms;
  for (const auto& spec : args.arms) {
    const auto eq = spec.find('=');
    require(eq != std::string::npos && eq > 0, Errc::ConfigError, "mil-bench: --arm expects mode=dir, got '" + spec + "'");
    mil::BenchmarkArm arm;
    arm.tiling_mode = spec.substr(0, eq);
    const fs::path dir = spec.substr(eq + 1);
    arm.bags = bags_from(config, dir);
    arm.encoder_tag = read_stores(dir).front().encoder_tag;
    arms.push_back(std::move(arm));
  }
  mil::BenchmarkConfig bc;
  bc.batch_sizes = config.mil_batch_sizes;
  bc.learning_rates = config.mil_learning_rates;
  bc.epochs = config.mil_epochs;
  bc.repeats = static_cast<std::size_t>(config.mil_repeats);
  bc.test_splits = static_cast<std::size_t>(config.mil_test_splits);
  bc.folds = static_cast<std::size_t>(config.mil_folds);
  bc.heads.clear();
  for (const auto& h : args.heads) bc.heads.push_back(mil::parse_head_kind(h));
  bc.label = config.label;
  bc.shuffle_labels = args.shuffle_labels;
  bc.seed = config.seed;
  bc.threads = config.threads;
  const auto result = mil::run_benchmark(arms, bc);

  std::vector<mil::BenchmarkRow> test_rows, val_rows;
  for (const auto& r : result.rows) (r.phase == "test" ? test_rows : val_rows).push_back(r);
  fs::create_directories(args.out / "models");
  io::write_text(args.out / "benchmark.csv", mil::benchmark_csv(test_rows));
  io::write_text(args.out / "sweep.csv", mil::benchmark_csv(val_rows));
  io::write_text(args.out / "summary.txt", mil::summary_table(result.summaries));
  for (const auto& s : result.summaries) {
    const auto dir = args.out / "models" / (s.tiling_mode + "_" + std::string(mil::head_kind_name(s.head)));
    fs::create_directories(dir);
    for (std::size_t m = 0; m < s.models.size(); ++m) {
      const std::size_t split = m / bc.repeats, repeat = m % bc.repeats;
      const auto& hp = s.selected[split];
      char name[64];
      std::snprintf(name, sizeof name, "split%zu_repeat%zu%s", split, repeat, kParamExt);
      mil::save_head(dir / name, *s.models[m],
                     {{"tiling_mode", s.tiling_mode},
                      {"encoder_tag", s.encoder_tag},
                      {"test_split", split},
                      {"repeat", repeat},
                      {"batch_size", hp.batch_size},
                      {"learning_rate", hp.learning_rate},
                      {"epochs", hp.epochs},
                      {"label", config.label}});
    }
  }
  std::cout << mil::summary_table(result.summaries);
}

void run_score(const PipelineConfig& config, const ScoreArgs& args) {
  require(!args.models.empty() && !args.stores.empty() && !args.out.empty(), Errc::ConfigError,
          "score: --models, --stores and --out are required");
  std::vector<std::shared_ptr<const mil::MilHead>> heads;
  for (const auto& p : files_with(args.models, kParamExt)) heads.push_back(mil::load_head(p));
  const auto bags = bags_from(config, args.stores);
  const auto scores = mil::ensemble_instance_scores(heads, bags, heads.size() ? heads.size() : mil::kEnsembleSize);
  std::ostringstream os;
  os << "slide_id,gland_id,mean_score,min_score,max_score,category\n";
  for (const auto& s : scores) {
    double sum = 0.0;
    for (double v : s.scores) sum += v;
    os << s.slide_id << ',' << s.gland_id << ',' << fmt(sum / static_cast<double>(s.scores.size())) << ','
       << fmt(*std::min_element(s.scores.begin(), s.scores.end())) << ','
       << fmt(*std::max_element(s.scores.begin(), s.scores.end())) << ',' << s.category << '\n';
  }
  if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
  io::write_text(args.out, os.str());
  say("score: " + std::to_string(scores.size()) + " instance(s) with " + std::to_string(heads.size()) + " model(s)");
}

// ---- render --------------------------------------------------------------------

void run_render(const PipelineConfig& config, const RenderArgs& args) {
  require(!args.slides.empty() && !args.instances.empty() && !args.out.empty(), Errc::ConfigError,
          "render: --slides, --instances and --out are required");
  require(args.clusters.empty() != args.scores.empty(), Errc::ConfigError,
          "render: give exactly one of --clusters or --scores");
  require(args.value == "category" || args.value == "mean", Errc::ConfigError, "render: --value must be category or mean");
  std::map<std::string, std::map<int, int>> cluster_of;
  std::map<std::string, std::map<int, double>> score_of;
  double range = 1.0;
  if (!args.clusters.empty()) {
    for (const auto& row : read_csv(args.clusters)) {
      cluster_of[column(row, "slide_id", args.clusters)][std::stoi(column(row, "gland_id", args.clusters))] =
          std::stoi(column(row, "cluster", args.clusters));
    }
  } else {
    double max_abs = 0.0;
    for (const auto& row : read_csv(args.scores)) {
      const double v = std::stod(column(row, args.value == "mean" ? "mean_score" : "category", args.scores));
      score_of[column(row, "slide_id", args.scores)][std::stoi(column(row, "gland_id", args.scores))] = v;
      max_abs = std::max(max_abs, std::abs(v));
    }
    if (args.value == "mean" && max_abs > 0) range = max_abs;
  }
  maps::RenderOptions ro;
  ro.downsample = config.map_downsample;
  ro.alpha = config.map_alpha;
  ro.threads = config.threads;
  fs::create_directories(args.out);
  std::size_t n = 0;
  for (const auto& path : slide_files(args.slides)) {
    const auto slide = io::load_slide(path);
    const auto& id = slide.slide_id();
    if (!fs::exists(args.instances / id / "manifest.jsonl")) continue;
    const auto instances = load_gland_masks(args.instances / id, id);
    maps::OverlayCanvas canvas;
    if (!args.clusters.empty()) {
      canvas = maps::render_cluster_map(slide, instances, cluster_of[id], ro);
      maps::save_overlay(args.out / (id + "_clusters.png"), canvas);
    } else {
      canvas = maps::render_score_map(slide, instances, score_of[id], range, ro);
      maps::save_overlay(args.out / (id + "_scores.png"), canvas);
    }
    ++n;
  }
  say("render: " + std::to_string(n) + " map(s)");
}

}  // namespace hit::cli
