#include <algorithm>
#include <cmath>

#include "rmb/errors.h"
#include "rmb/pipeline.h"

namespace rmb {

std::vector<double> ScorerClassifier::logits(const Vector& context) const {
  if (context.dim() != dim) throw ContractViolation("classifier: context dimension mismatch");
  std::vector<double> out(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const double* w = &weights[c * (dim + 1)];
    double z = w[dim];
    for (std::size_t i = 0; i < dim; ++i) z += w[i] * context[i];
    out[c] = z;
  }
  return out;
}

ScorerClassifier train_classifier(std::span<const LabeledContext> examples, double learning_rate,
                                  std::size_t max_iterations) {
  if (examples.empty()) throw ConfigError("train_classifier: no examples");
  const std::size_t dim = examples.front().context.dim();
  std::size_t classes = 0;
  for (const LabeledContext& e : examples) {
    if (e.context.dim() != dim) throw ContractViolation("train_classifier: inconsistent context dimensions");
    classes = std::max(classes, e.label + 1);
  }
  std::vector<bool> seen(classes, false);
  for (const LabeledContext& e : examples) seen[e.label] = true;
  for (std::size_t c = 0; c < classes; ++c) {
    if (!seen[c]) throw ConfigError("train_classifier: class " + std::to_string(c) + " has no examples");
  }

  ScorerClassifier clf{classes, dim, std::vector<double>(classes * (dim + 1), 0.0), false};
  const double n = static_cast<double>(examples.size());
  double previous = INFINITY;
  std::vector<double> grad(clf.weights.size());
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (const LabeledContext& e : examples) {
      const Vector lp = log_softmax(Vector(clf.logits(e.context)));
      loss -= lp[e.label];
      for (std::size_t c = 0; c < classes; ++c) {
        const double err = std::exp(lp[c]) - (c == e.label ? 1.0 : 0.0);
        double* g = &grad[c * (dim + 1)];
        for (std::size_t i = 0; i < dim; ++i) g[i] += err * e.context[i];
        g[dim] += err;
      }
    }
    loss /= n;
    for (std::size_t i = 0; i < grad.size(); ++i) clf.weights[i] -= learning_rate * grad[i] / n;
    if (std::abs(previous - loss) < 1e-6) break;
    previous = loss;
  }
  clf.trained = true;
  return clf;
}

std::size_t classifier_select(const ScorerClassifier& classifier, const Vector& context) {
  if (!classifier.trained) throw StateError("classifier_select: classifier has not been trained");
  const std::vector<double> z = classifier.logits(context);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

std::vector<LabeledContext> classifier_training_set(std::span<const Query> queries, const ScorerPool& pool,
                                                    const RngStream& noise_root) {
  std::vector<LabeledContext> out;
  for (const Query& q : queries) {
    if (q.universe.size() < 2) continue;
    std::size_t best = 0, worst = 0;
    for (std::size_t y = 1; y < q.universe.size(); ++y) {
      if (q.universe[y].gold_quality > q.universe[best].gold_quality) best = y;
      if (q.universe[y].gold_quality < q.universe[worst].gold_quality) worst = y;
    }
    if (best == worst) continue;
    std::optional<std::size_t> label;
    double best_gap = 0.0;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      const double gap = score(pool[k], q, q.universe[best], noise_root) - score(pool[k], q, q.universe[worst], noise_root);
      if (gap > best_gap) {
        best_gap = gap;
        label = k;
      }
    }
    if (label) out.push_back({q.features, *label});
  }
  return out;
}

}  // namespace rmb
