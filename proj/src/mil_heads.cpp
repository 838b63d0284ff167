#include <algorithm>
#include <cmath>
#include <numeric>

#include "hit/mil.hpp"
#include "hit/rng.hpp"
#include "hit/simd.hpp"

namespace hit::mil {

std::string_view head_kind_name(HeadKind kind) noexcept {
  return kind == HeadKind::Gated ? "gated" : "paw";
}

HeadKind parse_head_kind(std::string_view name) {
  if (name == "gated") return HeadKind::Gated;
  if (name == "paw") return HeadKind::Paw;
  fail(Errc::ConfigError, "unknown MIL head '" + std::string(name) + "' (expected gated or paw)");
}

DenseBag to_dense(const EmbeddingBag& bag) {
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < bag.capacity(); ++i) {
    if (bag.valid[i]) slots.push_back(i);
  }
  require(!slots.empty(), Errc::AllPaddedBag, "bag '" + bag.slide_id + "' has no valid instance");
  const std::size_t d = bag.dim();
  std::stable_sort(slots.begin(), slots.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = bag.instances.row(a);
    const auto rb = bag.instances.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  DenseBag out;
  out.x = MatrixD(slots.size(), d);
  for (std::size_t r = 0; r < slots.size(); ++r) {
    const auto src = bag.instances.row(slots[r]);
    std::copy(src.begin(), src.end(), out.x.row(r).begin());
  }
  out.origin = std::move(slots);
  out.label = bag.label;
  out.case_id = bag.case_id;
  out.slide_id = bag.slide_id;
  return out;
}

std::vector<DenseBag> to_dense(const std::vector<EmbeddingBag>& bags) {
  std::vector<DenseBag> out;
  out.reserve(bags.size());
  for (const auto& b : bags) out.push_back(to_dense(b));
  return out;
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double bce_with_logit(double z, int label) { return softplus(z) - static_cast<double>(label) * z; }

void softmax_inplace(std::vector<double>& e) {
  const double m = *std::max_element(e.begin(), e.end());
  double s = 0.0;
  for (auto& v : e) {
    v = std::exp(v - m);
    s += v;
  }
  for (auto& v : e) v /= s;
}

void xavier(Rng& rng, double* w, std::size_t rows, std::size_t cols) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (std::size_t i = 0; i < rows * cols; ++i) w[i] = rng.uniform(-a, a);
}

void check_input(const MatrixD& x, std::size_t d) {
  require(x.rows() > 0, Errc::AllPaddedBag, "bag has no valid instance");
  require(x.cols() == d, Errc::DimMismatch,
          "instance dimension " + std::to_string(x.cols()) + " differs from head input " + std::to_string(d));
}

// Offsets into the gated parameter vector.
struct GatedLayout {
  std::size_t d, h, V, bV, U, bU, w, c, c0;
  GatedLayout(std::size_t d_, std::size_t h_) : d(d_), h(h_) {
    V = 0;
    bV = V + h * d;
    U = bV + h;
    bU = U + h * d;
    w = bU + h;
    c = w + h;
    c0 = c + d;
  }
};

struct PawLayout {
  std::size_t d, h, A1, bA1, a2, C1, bC1, c2, c0, scale;
  PawLayout(std::size_t d_, std::size_t h_) : d(d_), h(h_) {
    A1 = 0;
    bA1 = A1 + h * d;
    a2 = bA1 + h;
    C1 = a2 + h;
    bC1 = C1 + h * d;
    c2 = bC1 + h;
    c0 = c2 + h;
    scale = c0 + 1;
  }
};

struct GatedCache {
  std::vector<double> t, g;  // n x h each
  std::vector<double> a;
  std::vector<double> z;     // pooled embedding
  double logit = 0.0;
};

GatedCache gated_forward(const std::vector<double>& p, const GatedLayout& L, const MatrixD& x) {
  const auto& k = simd::active();
  const std::size_t n = x.rows();
  GatedCache c;
  c.t.resize(n * L.h);
  c.g.resize(n * L.h);
  c.a.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double* t = &c.t[i * L.h];
    double* g = &c.g[i * L.h];
    k.gemv(&p[L.V], x.row(i).data(), &p[L.bV], t, L.h, L.d);
    k.gemv(&p[L.U], x.row(i).data(), &p[L.bU], g, L.h, L.d);
    double e = 0.0;
    for (std::size_t j = 0; j < L.h; ++j) {
      t[j] = std::tanh(t[j]);
      g[j] = sigmoid(g[j]);
      e += p[L.w + j] * t[j] * g[j];
    }
    c.a[i] = e;
  }
  softmax_inplace(c.a);
  c.z.assign(L.d, 0.0);
  for (std::size_t i = 0; i < n; ++i) k.axpy(c.a[i], x.row(i).data(), c.z.data(), L.d);
  c.logit = k.dot(&p[L.c], c.z.data(), L.d) + p[L.c0];
  return c;
}

struct PawCache {
  std::vector<double> ha, hc;  // n x h
  std::vector<double> a, contrib;
  double sum = 0.0;
};

PawCache paw_forward(const std::vector<double>& p, const PawLayout& L, const MatrixD& x) {
  const auto& k = simd::active();
  const std::size_t n = x.rows();
  PawCache c;
  c.ha.resize(n * L.h);
  c.hc.resize(n * L.h);
  c.a.resize(n);
  c.contrib.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double* ha = &c.ha[i * L.h];
    double* hc = &c.hc[i * L.h];
    k.gemv(&p[L.A1], x.row(i).data(), &p[L.bA1], ha, L.h, L.d);
    k.gemv(&p[L.C1], x.row(i).data(), &p[L.bC1], hc, L.h, L.d);
    for (std::size_t j = 0; j < L.h; ++j) {
      ha[j] = std::tanh(ha[j]);
      hc[j] = std::tanh(hc[j]);
    }
    c.a[i] = k.dot(&p[L.a2], ha, L.h);
    c.contrib[i] = std::tanh(k.dot(&p[L.c2], hc, L.h) + p[L.c0]);
  }
  softmax_inplace(c.a);
  for (std::size_t i = 0; i < n; ++i) c.sum += c.a[i] * c.contrib[i];
  return c;
}

}  // namespace

GatedAttentionHead::GatedAttentionHead(std::size_t in_dim, std::size_t hidden_dim, std::uint64_t seed)
    : MilHead(in_dim, hidden_dim, count_for(in_dim, hidden_dim)) {
  require(in_dim > 0 && hidden_dim > 0, Errc::InvalidArgument, "head dimensions must be > 0");
  const GatedLayout L(in_, hidden_);
  Rng rng(seed);
  xavier(rng, &params_[L.V], L.h, L.d);
  xavier(rng, &params_[L.U], L.h, L.d);
  xavier(rng, &params_[L.w], 1, L.h);
  // The bag classifier starts at zero so attention receives no gradient until
  // the classifier has picked a sign from the data.
}

MilOutput GatedAttentionHead::forward(const MatrixD& x) const {
  check_input(x, in_);
  const auto c = gated_forward(params_, GatedLayout(in_, hidden_), x);
  return {sigmoid(c.logit), c.logit, c.a, {}};
}

double GatedAttentionHead::accumulate_gradient(const MatrixD& x, int label, double weight,
                                               std::span<double> grad) const {
  check_input(x, in_);
  require(grad.size() == params_.size(), Errc::ShapeMismatch, "gradient buffer size");
  const GatedLayout L(in_, hidden_);
  const auto& k = simd::active();
  const auto& p = params_;
  const auto c = gated_forward(p, L, x);
  const double loss = bce_with_logit(c.logit, label);
  const double delta = weight * (sigmoid(c.logit) - static_cast<double>(label));
  const std::size_t n = x.rows();

  k.axpy(delta, c.z.data(), &grad[L.c], L.d);
  grad[L.c0] += delta;
  // d logit / d a_i = c . x_i
  std::vector<double> da(n);
  double mean_da = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    da[i] = delta * k.dot(&p[L.c], x.row(i).data(), L.d);
    mean_da += c.a[i] * da[i];
  }
  std::vector<double> dt(L.h), dg(L.h);
  for (std::size_t i = 0; i < n; ++i) {
    const double de = c.a[i] * (da[i] - mean_da);
    if (de == 0.0) continue;
    const double* t = &c.t[i * L.h];
    const double* g = &c.g[i * L.h];
    for (std::size_t j = 0; j < L.h; ++j) {
      grad[L.w + j] += de * t[j] * g[j];
      const double dtg = de * p[L.w + j];
      dt[j] = dtg * g[j] * (1.0 - t[j] * t[j]);
      dg[j] = dtg * t[j] * g[j] * (1.0 - g[j]);
      grad[L.bV + j] += dt[j];
      grad[L.bU + j] += dg[j];
    }
    const double* xi = x.row(i).data();
    for (std::size_t j = 0; j < L.h; ++j) {
      k.axpy(dt[j], xi, &grad[L.V + j * L.d], L.d);
      k.axpy(dg[j], xi, &grad[L.U + j * L.d], L.d);
    }
  }
  return loss;
}

std::unique_ptr<MilHead> GatedAttentionHead::clone() const {
  return std::make_unique<GatedAttentionHead>(*this);
}

PawMilHead::PawMilHead(std::size_t in_dim, std::size_t hidden_dim, std::uint64_t seed)
    : MilHead(in_dim, hidden_dim, count_for(in_dim, hidden_dim)) {
  require(in_dim > 0 && hidden_dim > 0, Errc::InvalidArgument, "head dimensions must be > 0");
  const PawLayout L(in_, hidden_);
  Rng rng(seed);
  xavier(rng, &params_[L.A1], L.h, L.d);
  xavier(rng, &params_[L.a2], 1, L.h);
  xavier(rng, &params_[L.C1], L.h, L.d);
  // Zero output weights give zero contributions at start, for the same reason
  // as the gated classifier.
  params_[L.scale] = 1.0;
}

MilOutput PawMilHead::forward(const MatrixD& x) const {
  check_input(x, in_);
  const auto c = paw_forward(params_, PawLayout(in_, hidden_), x);
  MilOutput out;
  out.logit = c.sum;
  out.probability = sigmoid(scale() * c.sum);
  out.attention = c.a;
  out.scores.resize(c.a.size());
  for (std::size_t i = 0; i < c.a.size(); ++i) out.scores[i] = c.a[i] * c.contrib[i];
  return out;
}

double PawMilHead::accumulate_gradient(const MatrixD& x, int label, double weight,
                                       std::span<double> grad) const {
  check_input(x, in_);
  require(grad.size() == params_.size(), Errc::ShapeMismatch, "gradient buffer size");
  const PawLayout L(in_, hidden_);
  const auto& k = simd::active();
  const auto& p = params_;
  const auto c = paw_forward(p, L, x);
  const double s = scale() * c.sum;
  const double loss = bce_with_logit(s, label);
  const double delta = weight * (sigmoid(s) - static_cast<double>(label));
  const std::size_t n = x.rows();

  grad[L.scale] += delta * c.sum;
  const double dsum = delta * scale();
  double mean_da = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_da += c.a[i] * dsum * c.contrib[i];
  std::vector<double> du(L.h);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.row(i).data();
    const double* ha = &c.ha[i * L.h];
    const double* hc = &c.hc[i * L.h];
    // contribution branch
    const double dpre = dsum * c.a[i] * (1.0 - c.contrib[i] * c.contrib[i]);
    if (dpre != 0.0) {
      grad[L.c0] += dpre;
      for (std::size_t j = 0; j < L.h; ++j) {
        grad[L.c2 + j] += dpre * hc[j];
        du[j] = dpre * p[L.c2 + j] * (1.0 - hc[j] * hc[j]);
        grad[L.bC1 + j] += du[j];
      }
      for (std::size_t j = 0; j < L.h; ++j) k.axpy(du[j], xi, &grad[L.C1 + j * L.d], L.d);
    }
    // attention branch
    const double de = c.a[i] * (dsum * c.contrib[i] - mean_da);
    if (de != 0.0) {
      for (std::size_t j = 0; j < L.h; ++j) {
        grad[L.a2 + j] += de * ha[j];
        du[j] = de * p[L.a2 + j] * (1.0 - ha[j] * ha[j]);
        grad[L.bA1 + j] += du[j];
      }
      for (std::size_t j = 0; j < L.h; ++j) k.axpy(du[j], xi, &grad[L.A1 + j * L.d], L.d);
    }
  }
  return loss;
}

std::unique_ptr<MilHead> PawMilHead::clone() const { return std::make_unique<PawMilHead>(*this); }

std::unique_ptr<MilHead> make_head(HeadKind kind, std::size_t in_dim, std::uint64_t seed,
                                   std::size_t hidden_dim) {
  if (kind == HeadKind::Gated) return std::make_unique<GatedAttentionHead>(in_dim, hidden_dim, seed);
  return std::make_unique<PawMilHead>(in_dim, hidden_dim, seed);
}

namespace {

BagOutput scatter(const MilOutput& out, const DenseBag& dense, std::size_t capacity) {
  BagOutput b;
  b.probability = out.probability;
  b.logit = out.logit;
  b.attention.assign(capacity, 0.0);
  for (std::size_t r = 0; r < dense.origin.size(); ++r) b.attention[dense.origin[r]] = out.attention[r];
  if (!out.scores.empty()) {
    b.scores.assign(capacity, 0.0);
    for (std::size_t r = 0; r < dense.origin.size(); ++r) b.scores[dense.origin[r]] = out.scores[r];
  }
  return b;
}

}  // namespace

BagOutput forward_bag(const MilHead& head, const EmbeddingBag& bag) {
  const auto dense = to_dense(bag);
  return scatter(head.forward(dense.x), dense, bag.capacity());
}

BagOutput forward_gated(const GatedAttentionHead& head, const EmbeddingBag& bag) {
  return forward_bag(head, bag);
}

BagOutput forward_paw(const PawMilHead& head, const EmbeddingBag& bag) { return forward_bag(head, bag); }

double loss_and_gradient(const MilHead& head, std::span<const DenseBag* const> bags, std::span<double> grad) {
  require(!bags.empty(), Errc::InvalidArgument, "no bags");
  std::fill(grad.begin(), grad.end(), 0.0);
  const double w = 1.0 / static_cast<double>(bags.size());
  double loss = 0.0;
  for (const auto* b : bags) loss += head.accumulate_gradient(b->x, b->label, w, grad);
  return loss * w;
}

}  // namespace hit::mil
