#include "ahgc/objectives.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "ahgc/error.h"
#include "ahgc/rng.h"
#include "ahgc/tensor_io.h"

namespace ahgc {
namespace {

using Eigen::MatrixXd;

FeatureMatrix row_softmax(const FeatureMatrix& logits) {
  FeatureMatrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - mx).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

double floored_log(double p) { return std::log(std::max(p, kProbFloor)); }

// Row-normalizes `b`; returns norms. Zero rows are rejected.
FeatureMatrix unit_rows(const FeatureMatrix& b, Eigen::VectorXd& norms) {
  norms = b.rowwise().norm();
  FeatureMatrix u(b.rows(), b.cols());
  for (Eigen::Index r = 0; r < b.rows(); ++r) {
    if (!(norms(r) > 0.0)) throw ValidationError("views", "zero vector in contrastive batch");
    u.row(r) = b.row(r) / norms(r);
  }
  return u;
}

}  // namespace

ClassifierParams ClassifierParams::zeros_like() const {
  ClassifierParams z = *this;
  z.proj_w.setZero();
  z.proj_b.setZero();
  z.head_w.setZero();
  z.head_b.setZero();
  return z;
}

ClassifierParams init_classifier(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes,
                                 std::uint64_t seed) {
  if (input_dim < 1) throw ValidationError("input_dim", "must be >= 1");
  if (hidden_dim < 1) throw ValidationError("hidden_dim", "must be >= 1");
  if (num_classes < 1) throw ValidationError("num_classes", "must be >= 1");
  ClassifierParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.num_classes = num_classes;
  p.seed = seed;
  Rng rng(substream_seed(seed, "classifier-init"));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](std::size_t rows, std::size_t cols) {
    MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scale * normal(rng);
    }
    return m;
  };
  p.proj_w = fill(input_dim, hidden_dim);
  p.proj_b = MatrixXd::Zero(1, static_cast<Eigen::Index>(hidden_dim));
  p.head_w = fill(hidden_dim, num_classes);
  p.head_b = MatrixXd::Zero(1, static_cast<Eigen::Index>(num_classes));
  return p;
}

void save_classifier(const std::filesystem::path& path, const ClassifierParams& params) {
  auto tensors = named_tensors(params);
  MatrixXd meta(1, 5);
  meta << static_cast<double>(params.input_dim), static_cast<double>(params.hidden_dim),
      static_cast<double>(params.num_classes), static_cast<double>(params.seed >> 32),
      static_cast<double>(params.seed & 0xffffffffULL);
  tensors.insert(tensors.begin(), {"meta", meta});
  save_tensors(path, tensors);
}

ClassifierParams load_classifier(const std::filesystem::path& path) {
  const auto tensors = load_tensors(path);
  if (tensors.empty() || tensors.front().name != "meta" || tensors.front().value.size() != 5) {
    throw ParseError(path.string(), 0, "classifier checkpoint lacks a meta tensor");
  }
  const auto& meta = tensors.front().value;
  const auto seed = (static_cast<std::uint64_t>(meta(0, 3)) << 32) | static_cast<std::uint64_t>(meta(0, 4));
  ClassifierParams params = init_classifier(static_cast<std::size_t>(meta(0, 0)), static_cast<std::size_t>(meta(0, 1)),
                                            static_cast<std::size_t>(meta(0, 2)), seed);
  std::size_t next = 1;
  params.for_each_tensor([&](const std::string& name, MatrixXd& t) {
    if (next >= tensors.size() || tensors[next].name != name || tensors[next].value.rows() != t.rows() ||
        tensors[next].value.cols() != t.cols()) {
      throw ParseError(path.string(), 0, "missing or misshapen tensor '" + name + "'");
    }
    t = tensors[next++].value;
  });
  if (next != tensors.size()) throw ParseError(path.string(), 0, "unexpected trailing tensors");
  return params;
}

FeatureMatrix project(const ClassifierParams& params, const FeatureMatrix& features) {
  if (static_cast<std::size_t>(features.cols()) != params.input_dim) {
    throw ValidationError("features", "dimension does not match classifier input_dim");
  }
  FeatureMatrix pre = features * params.proj_w;
  pre.rowwise() += params.proj_b.row(0);
  return pre.array().tanh().matrix();
}

ClassifierOutput classify(const ClassifierParams& params, const FeatureMatrix& features) {
  ClassifierOutput out;
  out.projected = project(params, features);
  out.logits = out.projected * params.head_w;
  out.logits.rowwise() += params.head_b.row(0);
  if (!out.logits.allFinite()) throw NumericalError("classifier: non-finite logits");
  out.probs = row_softmax(out.logits);
  return out;
}

double classification_loss(const FeatureMatrix& probs, std::span<const int> labels) {
  if (labels.empty()) throw ValidationError("labels", "classification loss needs at least one sample");
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw ValidationError("probs", "one row per label required");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= probs.cols()) throw ValidationError("labels", "class index out of range");
    s -= floored_log(probs(static_cast<Eigen::Index>(i), labels[i]));
  }
  return s / static_cast<double>(labels.size());
}

double equalization_loss(const FeatureMatrix& probs, std::size_t num_classes) {
  if (probs.rows() == 0) return 0.0;
  if (static_cast<std::size_t>(probs.cols()) != num_classes) {
    throw ValidationError("probs", "column count must equal the class count");
  }
  const double w = 1.0 / static_cast<double>(num_classes);
  double s = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    for (Eigen::Index c = 0; c < probs.cols(); ++c) s -= w * floored_log(probs(r, c));
  }
  return s / static_cast<double>(probs.rows());
}

AugmentedPair augment_pair(std::span<const double> feature, std::uint64_t seed, double noise_sigma,
                           double drop_prob) {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ValidationError("noise_sigma", "must be a non-negative finite number");
  }
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) throw ValidationError("drop_prob", "must lie in [0, 1)");
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution drop(drop_prob);
  auto make_view = [&] {
    std::vector<double> v(feature.begin(), feature.end());
    for (auto& x : v) {
      const double eps = noise(rng);
      const bool masked = drop(rng);
      x = masked ? 0.0 : x + noise_sigma * eps;
    }
    return v;
  };
  AugmentedPair pair;
  pair.view0 = make_view();
  pair.view1 = make_view();
  return pair;
}

std::uint64_t augmentation_seed(std::uint64_t master_seed, std::int64_t record_id, int epoch) {
  return substream_seed(master_seed, "augmentation", static_cast<std::uint64_t>(record_id),
                        static_cast<std::uint64_t>(epoch));
}

InfoNceForm parse_infonce_form(std::string_view text) {
  if (text == "printed") return InfoNceForm::kPrinted;
  if (text == "split") return InfoNceForm::kSplit;
  throw ValidationError("infonce_form", "expected 'printed' or 'split', got '" + std::string(text) + "'");
}

std::string_view to_string(InfoNceForm form) { return form == InfoNceForm::kPrinted ? "printed" : "split"; }

double infonce_loss(const FeatureMatrix& views0, const FeatureMatrix& views1, InfoNceForm form) {
  return infonce_loss_grad(views0, views1, form, nullptr, nullptr);
}

double infonce_loss_grad(const FeatureMatrix& views0, const FeatureMatrix& views1, InfoNceForm form,
                         FeatureMatrix* d_views0, FeatureMatrix* d_views1) {
  if (views0.rows() != views1.rows() || views0.cols() != views1.cols()) {
    throw ValidationError("views", "both view batches must have the same shape");
  }
  const Eigen::Index n = views0.rows();
  if (n < 1) throw ValidationError("views", "batch must be non-empty");

  Eigen::VectorXd norm0, norm1;
  const FeatureMatrix u0 = unit_rows(views0, norm0);
  const FeatureMatrix u1 = unit_rows(views1, norm1);
  const MatrixXd cos = u0 * u1.transpose();  // cos(i, j) = cos(b0_i, b1_j)

  // Row softmax (over view-1 partners of b0_i) and column softmax (over
  // view-0 partners of b1_i), both max-shifted.
  MatrixXd row_p(n, n), col_q(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mr = cos.row(i).maxCoeff();
    row_p.row(i) = (cos.row(i).array() - mr).exp().matrix();
    row_p.row(i) /= row_p.row(i).sum();
    const double mc = cos.col(i).maxCoeff();
    col_q.col(i) = (cos.col(i).array() - mc).exp().matrix();
    col_q.col(i) /= col_q.col(i).sum();
  }

  double loss = 0.0;
  MatrixXd d_cos = MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = row_p(i, i);
    const double b = col_q(i, i);
    double wa = 1.0;
    double wb = 1.0;
    if (form == InfoNceForm::kPrinted) {
      loss -= std::log(a + b);
      wa = a / (a + b);
      wb = b / (a + b);
    } else {
      loss -= std::log(a) + std::log(b);
    }
    // d(-log A_i)/d cos(i, l) = P_il - [l == i]; likewise down column i for B_i.
    d_cos.row(i) += wa * row_p.row(i);
    d_cos(i, i) -= wa;
    d_cos.col(i) += wb * col_q.col(i);
    d_cos(i, i) -= wb;
  }

  if (d_views0 || d_views1) {
    const MatrixXd d_u0 = d_cos * u1;
    const MatrixXd d_u1 = d_cos.transpose() * u0;
    auto through_norm = [](const FeatureMatrix& u, const MatrixXd& du, const Eigen::VectorXd& norms) {
      FeatureMatrix d(u.rows(), u.cols());
      for (Eigen::Index r = 0; r < u.rows(); ++r) {
        d.row(r) = (du.row(r) - du.row(r).dot(u.row(r)) * u.row(r)) / norms(r);
      }
      return d;
    };
    if (d_views0) *d_views0 = through_norm(u0, d_u0, norm0);
    if (d_views1) *d_views1 = through_norm(u1, d_u1, norm1);
  }
  return loss;
}

void validate(const LossWeights& w) {
  auto ok = [](double x) { return std::isfinite(x) && x >= 0.0; };
  if (!ok(w.alpha)) throw ValidationError("alpha", "must be a non-negative finite number");
  if (!ok(w.beta)) throw ValidationError("beta", "must be a non-negative finite number");
  if (!ok(w.gamma)) throw ValidationError("gamma", "must be a non-negative finite number");
}

double total_loss(double l0, double l1, double l2, double l0_labeled, const LossWeights& w) {
  return l0 + w.beta * l1 + w.alpha * l2 + w.gamma * l0_labeled;
}

LossBreakdown evaluate_objective(const ClassifierParams& params, const ObjectiveInputs& in,
                                 const LossWeights& weights, InfoNceForm form, ClassifierParams* gradient) {
  if (in.features == nullptr) throw ValidationError("features", "missing feature matrix");
  if (in.labeled.size() != in.labeled_targets.size() || in.original_labeled.size() != in.original_targets.size()) {
    throw ValidationError("labels", "index and target lists differ in length");
  }
  const FeatureMatrix& x = *in.features;
  const ClassifierOutput out = classify(params, x);
  const auto r = static_cast<Eigen::Index>(params.num_classes);

  auto gather = [&](const std::vector<std::size_t>& rows) {
    FeatureMatrix p(static_cast<Eigen::Index>(rows.size()), r);
    for (std::size_t t = 0; t < rows.size(); ++t) p.row(static_cast<Eigen::Index>(t)) = out.probs.row(static_cast<Eigen::Index>(rows[t]));
    return p;
  };

  LossBreakdown lb;
  lb.l0 = classification_loss(gather(in.labeled), in.labeled_targets);
  lb.l0_labeled = classification_loss(gather(in.original_labeled), in.original_targets);
  lb.l1 = equalization_loss(gather(in.unlabeled), params.num_classes);

  const bool contrastive = in.views0.rows() > 0;
  FeatureMatrix b0, b1, d_b0, d_b1;
  if (contrastive) {
    b0 = project(params, in.views0);
    b1 = project(params, in.views1);
    const double n = static_cast<double>(b0.rows());
    lb.l2 = infonce_loss_grad(b0, b1, form, gradient ? &d_b0 : nullptr, gradient ? &d_b1 : nullptr) / n;
  }
  lb.total = total_loss(lb.l0, lb.l1, lb.l2, lb.l0_labeled, weights);
  if (gradient == nullptr) return lb;

  // dTotal/dlogits, accumulated per row.
  FeatureMatrix d_logits = FeatureMatrix::Zero(x.rows(), r);
  auto add_ce = [&](const std::vector<std::size_t>& rows, const std::vector<int>& targets, double scale) {
    const double w = scale / static_cast<double>(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
      const auto i = static_cast<Eigen::Index>(rows[t]);
      if (out.probs(i, targets[t]) <= kProbFloor) continue;  // floored: flat
      d_logits.row(i) += w * out.probs.row(i);
      d_logits(i, targets[t]) -= w;
    }
  };
  add_ce(in.labeled, in.labeled_targets, 1.0);
  add_ce(in.original_labeled, in.original_targets, weights.gamma);
  if (!in.unlabeled.empty()) {
    const double w = weights.beta / static_cast<double>(in.unlabeled.size());
    const double inv_r = 1.0 / static_cast<double>(r);
    for (std::size_t i_u : in.unlabeled) {
      const auto i = static_cast<Eigen::Index>(i_u);
      // d/dlogit_k of -(1/R) sum_c log p_c over unfloored c.
      double live = 0.0;
      for (Eigen::Index c = 0; c < r; ++c) live += out.probs(i, c) > kProbFloor ? 1.0 : 0.0;
      for (Eigen::Index k = 0; k < r; ++k) {
        const double u = out.probs(i, k) > kProbFloor ? 1.0 : 0.0;
        d_logits(i, k) += w * inv_r * (out.probs(i, k) * live - u);
      }
    }
  }

  ClassifierParams& g = *gradient;
  g = params.zeros_like();
  g.head_w = out.projected.transpose() * d_logits;
  g.head_b = d_logits.colwise().sum();
  auto backprop_projection = [&](const FeatureMatrix& inputs, const FeatureMatrix& b, const FeatureMatrix& d_b) {
    const FeatureMatrix d_pre = (d_b.array() * (1.0 - b.array().square())).matrix();
    g.proj_w += inputs.transpose() * d_pre;
    g.proj_b += d_pre.colwise().sum();
  };
  backprop_projection(x, out.projected, d_logits * params.head_w.transpose());
  if (contrastive) {
    const double scale = weights.alpha / static_cast<double>(b0.rows());
    backprop_projection(in.views0, b0, scale * d_b0);
    backprop_projection(in.views1, b1, scale * d_b1);
  }
  return lb;
}

}  // namespace ahgc
