#include <algorithm>
#include <cmath>
#include <numeric>

#include "hit/mil.hpp"
#include "hit/rng.hpp"

namespace hit::mil {

namespace {

double full_loss(const MilHead& head, const std::vector<DenseBag>& bags, std::vector<double>& scratch) {
  std::vector<const DenseBag*> all;
  for (const auto& b : bags) all.push_back(&b);
  return loss_and_gradient(head, all, scratch);
}

}  // namespace

TrainHistory train_head(MilHead& head, const std::vector<DenseBag>& bags, const Hyperparams& hyper,
                        std::uint64_t seed, const EpochCallback& on_epoch, const TrainOptions& options) {
  require(hyper.batch_size >= 1, Errc::InvalidArgument, "batch size must be >= 1");
  require(hyper.learning_rate > 0, Errc::InvalidArgument, "learning rate must be > 0");
  require(hyper.epochs >= 0, Errc::InvalidArgument, "epochs must be >= 0");
  const auto positives = std::count_if(bags.begin(), bags.end(), [](const DenseBag& b) { return b.label == 1; });
  require(positives > 0 && static_cast<std::size_t>(positives) < bags.size(), Errc::SingleClassTrainingSet,
          "training set needs at least one positive and one negative bag");

  const std::size_t np = head.param_count();
  std::vector<double> grad(np), m(np, 0.0), v(np, 0.0);
  TrainHistory history;
  history.loss.push_back(full_loss(head, bags, grad));

  std::vector<std::size_t> order(bags.size());
  std::vector<const DenseBag*> batch;
  const auto bs = static_cast<std::size_t>(hyper.batch_size);
  double b1t = 1.0, b2t = 1.0;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double running = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(&bags[order[i]]);
      running += loss_and_gradient(head, batch, grad);
      ++n_batches;
      b1t *= options.beta1;
      b2t *= options.beta2;
      auto p = head.params();
      for (std::size_t i = 0; i < np; ++i) {
        m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * grad[i];
        v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * grad[i] * grad[i];
        const double mh = m[i] / (1.0 - b1t);
        const double vh = v[i] / (1.0 - b2t);
        p[i] -= hyper.learning_rate * mh / (std::sqrt(vh) + options.epsilon);
      }
    }
    for (double x : head.params()) require(std::isfinite(x), Errc::NumericFailure, "MIL head diverged");
    history.loss.push_back(options.full_epoch_loss ? full_loss(head, bags, grad)
                                                   : running / static_cast<double>(n_batches));
    if (on_epoch) on_epoch(epoch, head);
  }
  return history;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), Errc::ShapeMismatch, "one label per score required");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (double s : scores) require(!std::isnan(s), Errc::NumericFailure, "NaN score");
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0, neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    // ranks i+1 .. j share their mean
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[idx[t]] == 1) {
        rank_sum += rank;
        pos += 1;
      } else {
        neg += 1;
      }
    }
    i = j;
  }
  require(pos > 0 && neg > 0, Errc::SingleClass, "AUC needs both classes");
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

std::vector<double> predict(const MilHead& head, const std::vector<DenseBag>& bags) {
  std::vector<double> out;
  out.reserve(bags.size());
  for (const auto& b : bags) out.push_back(head.forward(b.x).probability);
  return out;
}

}  // namespace hit::mil
