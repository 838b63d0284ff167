#include "hit/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "hit/parallel.hpp"
#include "hit/params_io.hpp"
#include "hit/simd.hpp"

namespace hit::cl {

Standardizer Standardizer::fit(const MatrixD& rows) {
  require(rows.rows() > 0, Errc::EmptySplit, "cannot fit a standardizer on zero rows");
  const std::size_t n = rows.rows();
  const std::size_t d = rows.cols();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += rows(i, j);
  for (auto& m : s.mean) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = rows(i, j) - s.mean[j];
      var[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    // constant features stay centred but unscaled
    s.scale[j] = sd > 1e-12 * (1.0 + std::abs(s.mean[j])) ? 1.0 / sd : 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(std::size_t dim) {
  return Standardizer{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

void Standardizer::apply(std::span<const double> in, std::span<double> out) const {
  require(in.size() == mean.size(), Errc::DimMismatch, "standardizer dimension mismatch");
  for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mean[j]) * scale[j];
}

MatrixD Standardizer::apply(const MatrixD& rows) const {
  MatrixD out(rows.rows(), rows.cols());
  for (std::size_t i = 0; i < rows.rows(); ++i) apply(rows.row(i), out.row(i));
  return out;
}

ProjectionHead::ProjectionHead(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim,
                               std::uint64_t seed)
    : in_(in_dim), hidden_(hidden_dim), out_(out_dim) {
  require(in_ > 0 && hidden_ > 0 && out_ > 0, Errc::InvalidArgument, "head dimensions must be > 0");
  params_.assign(hidden_ * in_ + hidden_ + out_ * hidden_ + out_, 0.0);
  Rng rng(seed);
  const double a1 = std::sqrt(6.0 / static_cast<double>(in_ + hidden_));
  const double a2 = std::sqrt(6.0 / static_cast<double>(hidden_ + out_));
  double* p = params_.data();
  for (std::size_t i = 0; i < hidden_ * in_; ++i) p[i] = rng.uniform(-a1, a1);
  p += hidden_ * in_ + hidden_;
  for (std::size_t i = 0; i < out_ * hidden_; ++i) p[i] = rng.uniform(-a2, a2);
}

namespace {

struct RowCache {
  std::vector<double> h;  // tanh activations
  std::vector<double> y;  // unit projection
  double norm = 0.0;
};

void forward_row(const ProjectionHead& head, std::span<const double> x, RowCache& c) {
  const auto& k = simd::active();
  c.h.resize(head.hidden_dim());
  c.y.resize(head.out_dim());
  k.gemv(head.w1(), x.data(), head.b1(), c.h.data(), head.hidden_dim(), head.in_dim());
  for (auto& v : c.h) v = std::tanh(v);
  k.gemv(head.w2(), c.h.data(), head.b2(), c.y.data(), head.out_dim(), head.hidden_dim());
  c.norm = std::sqrt(k.dot(c.y.data(), c.y.data(), c.y.size()));
  require(c.norm > 0.0 && std::isfinite(c.norm), Errc::NumericFailure,
          "projection collapsed to zero or non-finite");
  for (auto& v : c.y) v /= c.norm;
}

void check_dims(const ProjectionHead& head, const MatrixD& inputs) {
  require(inputs.cols() == head.in_dim(), Errc::DimMismatch,
          "input dimension " + std::to_string(inputs.cols()) + " differs from head input " +
              std::to_string(head.in_dim()));
}

}  // namespace

void ProjectionHead::project(std::span<const double> x, std::span<double> y) const {
  require(x.size() == in_ && y.size() == out_, Errc::DimMismatch, "projection dimension mismatch");
  RowCache c;
  forward_row(*this, x, c);
  std::copy(c.y.begin(), c.y.end(), y.begin());
}

MatrixD ProjectionHead::project(const MatrixD& inputs) const {
  check_dims(*this, inputs);
  MatrixD out(inputs.rows(), out_);
  for (std::size_t i = 0; i < inputs.rows(); ++i) project(inputs.row(i), out.row(i));
  return out;
}

double triplet_loss(double d_ap, double d_an, double margin) {
  require(d_ap >= 0.0 && d_an >= 0.0, Errc::InvalidArgument, "distances must be >= 0");
  return std::max(0.0, d_ap - d_an + margin);
}

std::vector<Triplet> mine_batch_hard(const MatrixD& projections, std::span<const std::int64_t> groups) {
  const std::size_t n = projections.rows();
  require(groups.size() == n, Errc::ShapeMismatch, "one group id per row required");
  std::set<std::int64_t> distinct(groups.begin(), groups.end());
  require(distinct.size() >= 2, Errc::DegenerateBatch, "batch needs at least two distinct glands");
  const auto& k = simd::active();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = std::sqrt(k.l2sq(projections.row(i).data(), projections.row(j).data(), projections.cols()));
      dist[i * n + j] = d;
      dist[j * n + i] = d;
    }
  std::vector<Triplet> out;
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t pos = n, neg = n;
    double dp = -1.0, dn = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double d = dist[a * n + j];
      if (groups[j] == groups[a]) {
        if (d > dp) {
          dp = d;
          pos = j;
        }
      } else if (d < dn) {
        dn = d;
        neg = j;
      }
    }
    if (pos == n) continue;
    out.push_back({a, pos, neg, dp, dn});
  }
  return out;
}

namespace {

struct Forward {
  std::vector<RowCache> rows;
  MatrixD y;
};

Forward forward_batch(const ProjectionHead& head, const MatrixD& inputs) {
  check_dims(head, inputs);
  Forward f;
  f.rows.resize(inputs.rows());
  f.y = MatrixD(inputs.rows(), head.out_dim());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    forward_row(head, inputs.row(i), f.rows[i]);
    std::copy(f.rows[i].y.begin(), f.rows[i].y.end(), f.y.row(i).begin());
  }
  return f;
}

double mean_loss(const std::vector<Triplet>& triplets, double margin) {
  if (triplets.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : triplets) s += triplet_loss(t.d_ap, t.d_an, margin);
  return s / static_cast<double>(triplets.size());
}

}  // namespace

double batch_loss(const ProjectionHead& head, const MatrixD& inputs,
                  std::span<const std::int64_t> groups, double margin) {
  const auto f = forward_batch(head, inputs);
  return mean_loss(mine_batch_hard(f.y, groups), margin);
}

LossAndGradient batch_loss_and_gradient(const ProjectionHead& head, const MatrixD& inputs,
                                        std::span<const std::int64_t> groups, double margin) {
  const auto f = forward_batch(head, inputs);
  LossAndGradient out;
  out.triplets = mine_batch_hard(f.y, groups);
  out.loss = mean_loss(out.triplets, margin);
  out.gradient.assign(head.param_count(), 0.0);
  if (out.triplets.empty()) return out;

  const std::size_t n = inputs.rows();
  const std::size_t D = head.out_dim();
  const std::size_t Hd = head.hidden_dim();
  const std::size_t In = head.in_dim();
  const auto& k = simd::active();
  const double inv_t = 1.0 / static_cast<double>(out.triplets.size());

  MatrixD dy(n, D, 0.0);
  std::vector<double> diff(D);
  auto add_distance_grad = [&](std::size_t a, std::size_t b, double d, double coef) {
    // coef * d(dist(a,b)) / dy_a and / dy_b
    if (d <= 0.0) return;
    for (std::size_t j = 0; j < D; ++j) diff[j] = (f.y(a, j) - f.y(b, j)) / d;
    k.axpy(coef, diff.data(), dy.row(a).data(), D);
    k.axpy(-coef, diff.data(), dy.row(b).data(), D);
  };
  for (const auto& t : out.triplets) {
    if (t.d_ap - t.d_an + margin <= 0.0) continue;
    add_distance_grad(t.anchor, t.positive, t.d_ap, inv_t);
    add_distance_grad(t.anchor, t.negative, t.d_an, -inv_t);
  }

  double* g_w1 = out.gradient.data();
  double* g_b1 = g_w1 + Hd * In;
  double* g_w2 = g_b1 + Hd;
  double* g_b2 = g_w2 + D * Hd;
  std::vector<double> dz(D), dh(Hd);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = f.rows[i];
    const auto dyi = dy.row(i);
    const double proj = k.dot(c.y.data(), dyi.data(), D);
    bool any = false;
    for (std::size_t j = 0; j < D; ++j) {
      dz[j] = (dyi[j] - c.y[j] * proj) / c.norm;
      any = any || dz[j] != 0.0;
    }
    if (!any) continue;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t r = 0; r < D; ++r) {
      k.axpy(dz[r], c.h.data(), g_w2 + r * Hd, Hd);
      g_b2[r] += dz[r];
      k.axpy(dz[r], head.w2() + r * Hd, dh.data(), Hd);
    }
    const auto x = inputs.row(i);
    for (std::size_t r = 0; r < Hd; ++r) {
      const double da = dh[r] * (1.0 - c.h[r] * c.h[r]);
      if (da == 0.0) continue;
      k.axpy(da, x.data(), g_w1 + r * In, In);
      g_b1[r] += da;
    }
  }
  return out;
}

RgbImage augment_crop(const RgbImage& crop, Rng& rng, const ColorJitter& jitter) {
  require(!crop.empty(), Errc::EmptyImage, "cannot augment an empty crop");
  const bool hflip = rng.uniform() < 0.5;
  const bool vflip = rng.uniform() < 0.5;
  const double b = rng.uniform(1.0 - jitter.brightness, 1.0 + jitter.brightness);
  const double c = rng.uniform(1.0 - jitter.contrast, 1.0 + jitter.contrast);
  const double s = rng.uniform(1.0 - jitter.saturation, 1.0 + jitter.saturation);
  const int w = crop.width();
  const int h = crop.height();
  std::vector<double> px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
  double mean_gray = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto* src = crop.pixel(hflip ? w - 1 - x : x, vflip ? h - 1 - y : y);
      double* dst = &px[(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)) * 3];
      for (int k = 0; k < 3; ++k) dst[k] = src[k] * b;
      mean_gray += 0.299 * dst[0] + 0.587 * dst[1] + 0.114 * dst[2];
    }
  }
  mean_gray /= static_cast<double>(w) * h;
  RgbImage out(w, h);
  for (std::size_t i = 0; i < px.size(); i += 3) {
    double* p = &px[i];
    for (int k = 0; k < 3; ++k) p[k] = (p[k] - mean_gray) * c + mean_gray;
    const double gray = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    for (int k = 0; k < 3; ++k) {
      const double v = gray + (p[k] - gray) * s;
      out.pixels()[i + static_cast<std::size_t>(k)] =
          static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return out;
}

ViewSet build_view_set(const std::vector<EncoderInput>& inputs, const std::string& encoder_tag,
                       int views_per_gland, std::uint64_t seed, int threads,
                       const ColorJitter& jitter) {
  require(views_per_gland >= 2, Errc::InvalidArgument, "need at least two views per gland");
  const auto encoder = make_encoder(encoder_tag);
  const std::size_t v = static_cast<std::size_t>(views_per_gland);
  ViewSet out;
  out.vectors = MatrixF(inputs.size() * v, encoder->dim());
  out.groups.resize(inputs.size() * v);
  parallel_for(inputs.size() * v, threads, [&](std::size_t r) {
    const std::size_t i = r / v;
    Rng rng(derive_seed(seed, r));
    EncoderInput view{augment_crop(inputs[i].crop, rng, jitter), inputs[i].morphometrics};
    const auto e = encoder->encode(view);
    std::copy(e.begin(), e.end(), out.vectors.row(r).begin());
    out.groups[r] = static_cast<std::int64_t>(i);
  });
  return out;
}

SplitGroups split_groups(std::span<const std::int64_t> groups, double train_fraction,
                         double val_fraction, std::uint64_t seed) {
  require(train_fraction > 0 && val_fraction >= 0 && train_fraction + val_fraction <= 1.0,
          Errc::InvalidArgument, "invalid split fractions");
  std::vector<std::int64_t> ids(groups.begin(), groups.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);
  const std::size_t n = ids.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  SplitGroups s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train)));
  s.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train)),
               ids.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)), ids.end());
  return s;
}

namespace {

struct Batch {
  MatrixD inputs;
  std::vector<std::int64_t> groups;
};

/// Group-aligned batches of at most `batch_size` rows, in the given group order.
std::vector<Batch> make_batches(const MatrixD& standardized, const std::map<std::int64_t, std::vector<std::size_t>>& rows_of,
                                const std::vector<std::int64_t>& order, std::size_t batch_size) {
  std::vector<Batch> batches;
  std::vector<std::size_t> rows;
  std::vector<std::int64_t> gids;
  auto flush = [&] {
    std::set<std::int64_t> distinct(gids.begin(), gids.end());
    if (distinct.size() >= 2) {
      Batch b{MatrixD(rows.size(), standardized.cols()), gids};
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = standardized.row(rows[i]);
        std::copy(src.begin(), src.end(), b.inputs.row(i).begin());
      }
      batches.push_back(std::move(b));
    }
    rows.clear();
    gids.clear();
  };
  for (auto g : order) {
    const auto& r = rows_of.at(g);
    if (!rows.empty() && rows.size() + r.size() > batch_size) flush();
    for (auto idx : r) {
      rows.push_back(idx);
      gids.push_back(g);
    }
  }
  if (!rows.empty()) flush();
  return batches;
}

double evaluate(const ProjectionHead& head, const std::vector<Batch>& batches, double margin) {
  if (batches.empty()) return 0.0;
  double s = 0.0;
  for (const auto& b : batches) s += batch_loss(head, b.inputs, b.groups, margin);
  return s / static_cast<double>(batches.size());
}

}  // namespace

TrainResult train_projection_head(const ViewSet& views, const TrainConfig& config) {
  require(views.vectors.rows() == views.groups.size(), Errc::ShapeMismatch,
          "one group id per view required");
  require(config.epochs >= 0, Errc::InvalidArgument, "epochs must be >= 0");
  require(config.batch_size >= 2, Errc::InvalidArgument, "batch size must be >= 2");
  TrainResult result;
  result.split = split_groups(views.groups, config.train_fraction, config.val_fraction,
                              derive_seed(config.seed, 1));
  if (result.split.train.empty() || result.split.val.empty() || result.split.test.empty()) {
    fail(Errc::EmptySplit, "train/validation/test split left a set empty");
  }
  std::map<std::int64_t, std::vector<std::size_t>> rows_of;
  for (std::size_t i = 0; i < views.groups.size(); ++i) rows_of[views.groups[i]].push_back(i);

  const auto all = matrix_cast<double>(views.vectors);
  std::vector<std::size_t> train_rows;
  for (auto g : result.split.train)
    for (auto r : rows_of.at(g)) train_rows.push_back(r);
  MatrixD train_matrix(train_rows.size(), all.cols());
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    const auto src = all.row(train_rows[i]);
    std::copy(src.begin(), src.end(), train_matrix.row(i).begin());
  }
  result.standardizer = Standardizer::fit(train_matrix);
  const auto standardized = result.standardizer.apply(all);

  ProjectionHead head(all.cols(), config.hidden_dim, config.out_dim, derive_seed(config.seed, 2));
  result.initial = head;
  const auto val_batches = make_batches(standardized, rows_of, result.split.val, config.batch_size);
  result.val_loss.push_back(evaluate(head, val_batches, config.margin));
  result.train_loss.push_back(0.0);

  std::set<int> checkpoints;
  for (int c : config.checkpoint_epochs) {
    if (config.epochs > 0) checkpoints.insert(std::clamp(c, 1, config.epochs));
  }

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto order = result.split.train;
    Rng rng(derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    const auto batches = make_batches(standardized, rows_of, order, config.batch_size);
    double epoch_loss = 0.0;
    for (const auto& b : batches) {
      const auto lg = batch_loss_and_gradient(head, b.inputs, b.groups, config.margin);
      epoch_loss += lg.loss;
      auto p = head.params();
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= config.learning_rate * lg.gradient[i];
    }
    for (double v : head.params()) {
      require(std::isfinite(v), Errc::NumericFailure, "projection head diverged");
    }
    result.train_loss.push_back(batches.empty() ? 0.0 : epoch_loss / static_cast<double>(batches.size()));
    result.val_loss.push_back(evaluate(head, val_batches, config.margin));
    if (checkpoints.count(epoch)) result.checkpoints.push_back({epoch, head, result.val_loss.back()});
  }
  result.final_head = head;
  return result;
}

EmbeddingStore project_embeddings(const ProjectionHead& head, const Standardizer& standardizer,
                                  const EmbeddingStore& store) {
  require(store.dim() == head.in_dim() && standardizer.mean.size() == head.in_dim(),
          Errc::DimMismatch,
          "store dimension " + std::to_string(store.dim()) + " differs from head input " +
              std::to_string(head.in_dim()));
  EmbeddingStore out;
  out.slide_id = store.slide_id;
  out.encoder_tag = store.encoder_tag + "+cl";
  out.gland_ids = store.gland_ids;
  out.bboxes = store.bboxes;
  out.vectors = MatrixF(store.size(), head.out_dim());
  std::vector<double> x(head.in_dim()), z(head.in_dim()), y(head.out_dim());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto src = store.vectors.row(i);
    std::copy(src.begin(), src.end(), x.begin());
    standardizer.apply(x, z);
    head.project(z, y);
    std::copy(y.begin(), y.end(), out.vectors.row(i).begin());
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint,
                     const Standardizer& standardizer, double margin, std::uint64_t seed) {
  io::ParamFile f;
  f.kind = "projection_head";
  f.metadata = {{"epoch", checkpoint.epoch},
                {"margin", margin},
                {"seed", seed},
                {"val_loss", checkpoint.val_loss},
                {"in_dim", checkpoint.head.in_dim()},
                {"hidden_dim", checkpoint.head.hidden_dim()},
                {"out_dim", checkpoint.head.out_dim()}};
  const auto p = checkpoint.head.params();
  f.values.assign(p.begin(), p.end());
  f.values.insert(f.values.end(), standardizer.mean.begin(), standardizer.mean.end());
  f.values.insert(f.values.end(), standardizer.scale.begin(), standardizer.scale.end());
  io::write_param_file(path, f);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto f = io::read_param_file(path);
  require(f.kind == "projection_head", Errc::FormatError,
          "'" + path.string() + "' is not a projection head checkpoint");
  LoadedCheckpoint out;
  const auto& m = f.metadata;
  const auto in = m.at("in_dim").get<std::size_t>();
  ProjectionHead head(in, m.at("hidden_dim").get<std::size_t>(), m.at("out_dim").get<std::size_t>(), 0);
  const std::size_t np = head.param_count();
  require(f.values.size() == np + 2 * in, Errc::FormatError, "checkpoint parameter count mismatch");
  std::copy(f.values.begin(), f.values.begin() + static_cast<std::ptrdiff_t>(np), head.params().begin());
  out.standardizer.mean.assign(f.values.begin() + static_cast<std::ptrdiff_t>(np),
                               f.values.begin() + static_cast<std::ptrdiff_t>(np + in));
  out.standardizer.scale.assign(f.values.begin() + static_cast<std::ptrdiff_t>(np + in), f.values.end());
  out.checkpoint = {m.at("epoch").get<int>(), std::move(head), m.at("val_loss").get<double>()};
  out.margin = m.at("margin").get<double>();
  out.seed = m.at("seed").get<std::uint64_t>();
  return out;
}

}  // namespace hit::cl
