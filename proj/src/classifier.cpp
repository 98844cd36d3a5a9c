#include "deelbo/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "deelbo/unconstrained.hpp"

namespace deelbo {

namespace {

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd logits) {
  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  logits.colwise() -= row_max;
  Eigen::MatrixXd probs = logits.array().exp();
  probs.array().colwise() /= probs.rowwise().sum().array();
  return probs;
}

Eigen::VectorXi to_zero_based(const Eigen::VectorXi& labels1,
                              Eigen::Index num_classes) {
  Eigen::VectorXi labels0(labels1.size());
  for (Eigen::Index i = 0; i < labels1.size(); ++i) {
    if (labels1[i] < 1 || labels1[i] > num_classes)
      throw std::invalid_argument("labels must lie in {1..C}");
    labels0[i] = labels1[i] - 1;
  }
  return labels0;
}

// Adam ascent over a flat parameter vector, shared by the MAP fits.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  int t = 0;

  explicit AdamState(Eigen::Index n)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
            double lr) {
    ++t;
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(0.9, t);
    const double c2 = 1.0 - std::pow(0.999, t);
    params += lr * (m / c1).cwiseQuotient(
                       ((v / c2).cwiseSqrt().array() + 1e-8).matrix());
  }
};

}  // namespace

ToyBackbone::ToyBackbone(Eigen::Index input_dim, Eigen::Index hidden_dim,
                         Eigen::Index encode_dim)
    : input_dim_(input_dim),
      hidden_dim_(hidden_dim),
      encode_dim_(encode_dim) {
  if (input_dim < 1 || hidden_dim < 1 || encode_dim < 1)
    throw std::invalid_argument("ToyBackbone: dimensions must be >= 1");
}

Eigen::Index ToyBackbone::weight_count() const {
  return hidden_dim_ * input_dim_ + hidden_dim_ + encode_dim_ * hidden_dim_ +
         encode_dim_;
}

namespace {

// Unpacks [vec(W1) | b1 | vec(W2) | b2] (column-major).
struct BackboneViews {
  Eigen::Map<const Eigen::MatrixXd> W1;
  Eigen::Map<const Eigen::VectorXd> b1;
  Eigen::Map<const Eigen::MatrixXd> W2;
  Eigen::Map<const Eigen::VectorXd> b2;
};

BackboneViews unpack(const ToyBackbone& shape, const Eigen::VectorXd& w) {
  if (w.size() != shape.weight_count())
    throw std::invalid_argument("backbone weight vector has wrong size");
  const Eigen::Index h = shape.hidden_dim();
  const Eigen::Index in = shape.input_dim();
  const Eigen::Index e = shape.encode_dim();
  const double* p = w.data();
  return BackboneViews{
      {p, h, in}, {p + h * in, h}, {p + h * in + h, e, h},
      {p + h * in + h + e * h, e}};
}

}  // namespace

Eigen::MatrixXd ToyBackbone::encode(const Eigen::VectorXd& weights,
                                    const Eigen::MatrixXd& X) const {
  if (X.cols() != input_dim_)
    throw std::invalid_argument("ToyBackbone: input dimension mismatch");
  const BackboneViews v = unpack(*this, weights);
  Eigen::MatrixXd h1 = (X * v.W1.transpose()).rowwise() + v.b1.transpose();
  h1 = h1.array().tanh();
  Eigen::MatrixXd z0 = (h1 * v.W2.transpose()).rowwise() + v.b2.transpose();
  z0 = z0.array().tanh();
  Eigen::MatrixXd z(X.rows(), encode_dim_ + 1);
  z.leftCols(encode_dim_) = z0;
  z.col(encode_dim_).setOnes();
  return z;
}

Eigen::VectorXd ToyBackbone::random_weights(Rng& rng) const {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(weight_count());
  const Eigen::Index h = hidden_dim_;
  const Eigen::Index in = input_dim_;
  const Eigen::Index e = encode_dim_;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
  for (Eigen::Index i = 0; i < h * in; ++i) w[i] = s1 * rng.normal();
  for (Eigen::Index i = 0; i < e * h; ++i)
    w[h * in + h + i] = s2 * rng.normal();
  return w;
}

GaussianPrior PriorSpec::build_backbone_prior(
    const Eigen::VectorXd& pretrained_mean) const {
  switch (variant) {
    case Variant::kL2Zero:
      return GaussianPrior::scaled_identity(
          Eigen::VectorXd::Zero(pretrained_mean.size()), initial_lambda);
    case Variant::kL2Sp:
      return GaussianPrior::scaled_identity(pretrained_mean, initial_lambda);
    case Variant::kPtyl:
      return GaussianPrior::diag_plus_lowrank(pretrained_mean, sigma_diag,
                                              column_factors, initial_lambda);
  }
  throw std::invalid_argument("PriorSpec: unknown variant");
}

double categorical_loglik(const Eigen::MatrixXd& head,
                          const Eigen::MatrixXd& encodings,
                          const Eigen::VectorXi& labels) {
  if (encodings.cols() != head.cols())
    throw std::invalid_argument("categorical_loglik: dimension mismatch");
  if (encodings.rows() != labels.size())
    throw std::invalid_argument("categorical_loglik: label count mismatch");
  const Eigen::VectorXi labels0 = to_zero_based(labels, head.rows());
  const Eigen::MatrixXd logits = encodings * head.transpose();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double row_max = logits.row(i).maxCoeff();
    const double lse =
        row_max +
        std::log((logits.row(i).array() - row_max).exp().sum());
    ll += logits(i, labels0[i]) - lse;
  }
  return ll;
}

TransferLoglikGrad transfer_loglik_grad(const ToyBackbone& backbone,
                                        const Eigen::VectorXd& weights,
                                        const Eigen::MatrixXd& head,
                                        const Eigen::MatrixXd& X,
                                        const Eigen::VectorXi& labels0) {
  const Eigen::Index n = X.rows();
  const Eigen::Index e = backbone.encode_dim();
  const BackboneViews v = unpack(backbone, weights);

  Eigen::MatrixXd h1 = (X * v.W1.transpose()).rowwise() + v.b1.transpose();
  h1 = h1.array().tanh();
  Eigen::MatrixXd z0 = (h1 * v.W2.transpose()).rowwise() + v.b2.transpose();
  z0 = z0.array().tanh();
  Eigen::MatrixXd z(n, e + 1);
  z.leftCols(e) = z0;
  z.col(e).setOnes();

  const Eigen::MatrixXd logits = z * head.transpose();
  Eigen::MatrixXd g = -softmax_rows(logits);  // N x C
  TransferLoglikGrad out;
  out.value = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double row_max = logits.row(i).maxCoeff();
    const double lse =
        row_max +
        std::log((logits.row(i).array() - row_max).exp().sum());
    out.value += logits(i, labels0[i]) - lse;
    g(i, labels0[i]) += 1.0;
  }

  out.d_head = g.transpose() * z;  // C x (e+1)

  const Eigen::MatrixXd dz = g * head;  // N x (e+1)
  const Eigen::MatrixXd da2 =
      dz.leftCols(e).cwiseProduct((1.0 - z0.array().square()).matrix());
  const Eigen::MatrixXd da1 =
      (da2 * v.W2).cwiseProduct((1.0 - h1.array().square()).matrix());

  const Eigen::Index h = backbone.hidden_dim();
  const Eigen::Index in = backbone.input_dim();
  out.d_backbone.resize(backbone.weight_count());
  Eigen::Map<Eigen::MatrixXd>(out.d_backbone.data(), h, in) =
      da1.transpose() * X;
  Eigen::Map<Eigen::VectorXd>(out.d_backbone.data() + h * in, h) =
      da1.colwise().sum();
  Eigen::Map<Eigen::MatrixXd>(out.d_backbone.data() + h * in + h, e, h) =
      da2.transpose() * h1;
  Eigen::Map<Eigen::VectorXd>(out.d_backbone.data() + h * in + h + e * h,
                              e) = da2.colwise().sum();
  return out;
}

Eigen::MatrixXd predict_point(const ToyTransferModel& model,
                              const Eigen::MatrixXd& X_star) {
  const Eigen::MatrixXd z = model.backbone.encode(model.backbone_mean, X_star);
  return softmax_rows(z * model.head_mean.transpose());
}

Eigen::MatrixXd predict_point(const RffClassifier& model,
                              const Eigen::MatrixXd& X_star) {
  const FeatureMatrix phi = featurize(model.feature_map, model.kernel, X_star);
  return softmax_rows(phi.values * model.head_means.transpose());
}

Eigen::MatrixXd predict_mc(const ToyTransferModel& model,
                           const Eigen::MatrixXd& X_star, int sample_count,
                           std::uint64_t seed) {
  if (sample_count < 1)
    throw std::invalid_argument("predict_mc: sample_count must be >= 1");
  const Eigen::Index f = model.backbone.weight_count();
  const Eigen::Index c = model.head_mean.rows();
  const Eigen::Index k = model.head_mean.cols();
  const double sigma = std::sqrt(model.shared_variance);
  Rng rng(seed);
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(X_star.rows(), c);
  for (int s = 0; s < sample_count; ++s) {
    const Eigen::VectorXd eps = rng.normal_vector(f + c * k);
    const Eigen::VectorXd w = model.backbone_mean + sigma * eps.head(f);
    Eigen::MatrixXd head = model.head_mean;
    head.reshaped() += sigma * eps.tail(c * k);
    const Eigen::MatrixXd z = model.backbone.encode(w, X_star);
    probs += softmax_rows(z * head.transpose());
  }
  return probs / static_cast<double>(sample_count);
}

Eigen::MatrixXd predict_mc(const RffClassifier& model,
                           const Eigen::MatrixXd& X_star, int sample_count,
                           std::uint64_t seed) {
  if (sample_count < 1)
    throw std::invalid_argument("predict_mc: sample_count must be >= 1");
  const Eigen::Index c = model.head_means.rows();
  const Eigen::Index r = model.head_means.cols();
  const double sigma = std::sqrt(model.shared_variance);
  const FeatureMatrix phi = featurize(model.feature_map, model.kernel, X_star);
  Rng rng(seed);
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(X_star.rows(), c);
  for (int s = 0; s < sample_count; ++s) {
    Eigen::MatrixXd head = model.head_means;
    head.reshaped() += sigma * rng.normal_vector(c * r);
    probs += softmax_rows(phi.values * head.transpose());
  }
  return probs / static_cast<double>(sample_count);
}

TransferClassifierProblem::TransferClassifierProblem(
    ToyBackbone backbone, GaussianPrior backbone_prior, double initial_tau,
    Eigen::Index num_classes, Eigen::MatrixXd X, Eigen::VectorXi labels1)
    : backbone_(backbone),
      backbone_prior_(std::move(backbone_prior)),
      initial_tau_(initial_tau),
      num_classes_(num_classes),
      X_(std::move(X)),
      labels0_(to_zero_based(labels1, num_classes)) {
  if (num_classes_ < 2)
    throw std::invalid_argument("classifier needs at least two classes");
  if (backbone_prior_.dim() != backbone_.weight_count())
    throw std::invalid_argument("backbone prior dimension mismatch");
  if (X_.rows() != labels0_.size())
    throw std::invalid_argument("feature/label count mismatch");
  if (!(initial_tau_ > 0.0))
    throw std::invalid_argument("initial tau must be > 0");
}

Eigen::Index TransferClassifierProblem::theta_dim() const {
  return backbone_.weight_count() + head_dim();
}

Eigen::VectorXd TransferClassifierProblem::initial_mean() const {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(theta_dim());
  mean.head(backbone_.weight_count()) = backbone_prior_.mean();
  return mean;
}

double TransferClassifierProblem::loglik(const Eigen::VectorXd& theta,
                                         const Eigen::VectorXd& /*eta*/,
                                         Eigen::VectorXd* grad_theta,
                                         Eigen::VectorXd* grad_eta) const {
  const Eigen::Index f = backbone_.weight_count();
  const Eigen::Index k = backbone_.feature_dim();
  const Eigen::Map<const Eigen::MatrixXd> head(theta.data() + f,
                                               num_classes_, k);
  if (grad_theta == nullptr) {
    const Eigen::MatrixXd z = backbone_.encode(theta.head(f), X_);
    Eigen::VectorXi labels1 = labels0_.array() + 1;
    return categorical_loglik(head, z, labels1);
  }
  const TransferLoglikGrad g =
      transfer_loglik_grad(backbone_, theta.head(f), head, X_, labels0_);
  grad_theta->resize(theta_dim());
  grad_theta->head(f) = g.d_backbone;
  grad_theta->tail(head_dim()) = g.d_head.reshaped();
  if (grad_eta != nullptr) grad_eta->resize(0);
  return g.value;
}

double TransferClassifierProblem::kl(const IsotropicGaussianQ& q,
                                     const PriorScales& scales,
                                     Eigen::VectorXd* grad_mean,
                                     double* grad_variance) const {
  const Eigen::Index f = backbone_.weight_count();
  Eigen::VectorXd backbone_grad;
  double backbone_var_grad = 0.0, head_var_grad = 0.0;
  Eigen::VectorXd head_grad;
  const double kl_backbone = kl_isotropic_vs_gaussian(
      q.mean.head(f), q.variance, backbone_prior_, scales.lambda,
      grad_mean != nullptr ? &backbone_grad : nullptr,
      grad_variance != nullptr ? &backbone_var_grad : nullptr);
  const double kl_head = kl_isotropic_vs_head(
      q.mean.tail(head_dim()), q.variance, scales.tau,
      grad_mean != nullptr ? &head_grad : nullptr,
      grad_variance != nullptr ? &head_var_grad : nullptr);
  if (grad_mean != nullptr) {
    grad_mean->resize(theta_dim());
    grad_mean->head(f) = backbone_grad;
    grad_mean->tail(head_dim()) = head_grad;
  }
  if (grad_variance != nullptr)
    *grad_variance = backbone_var_grad + head_var_grad;
  return kl_backbone + kl_head;
}

PriorScales TransferClassifierProblem::initial_scales() const {
  return {backbone_prior_.lambda(), initial_tau_};
}

PriorScales TransferClassifierProblem::closed_form_update(
    const IsotropicGaussianQ& q, const PriorScales& /*scales*/) const {
  const Eigen::Index f = backbone_.weight_count();
  return {optimal_lambda(q.mean.head(f), q.variance, backbone_prior_),
          optimal_tau(q.mean.tail(head_dim()), q.variance, head_dim())};
}

ToyTransferModel TransferClassifierProblem::model_from(
    const IsotropicGaussianQ& q) const {
  const Eigen::Index f = backbone_.weight_count();
  ToyTransferModel model{backbone_,
                         q.mean.head(f),
                         Eigen::Map<const Eigen::MatrixXd>(
                             q.mean.data() + f, num_classes_,
                             backbone_.feature_dim()),
                         q.variance, backbone_prior_.mean()};
  return model;
}

RffClassifierProblem::RffClassifierProblem(RffFeatureMap map,
                                           KernelParams kernel_init,
                                           Eigen::Index num_classes,
                                           Eigen::MatrixXd X,
                                           Eigen::VectorXi labels1)
    : map_(std::move(map)),
      kernel_init_(kernel_init),
      num_classes_(num_classes),
      X_(std::move(X)),
      labels0_(to_zero_based(labels1, num_classes)) {
  kernel_init_.validate();
  if (num_classes_ < 2)
    throw std::invalid_argument("classifier needs at least two classes");
  if (X_.rows() != labels0_.size())
    throw std::invalid_argument("feature/label count mismatch");
  if (X_.cols() != map_.input_dim())
    throw std::invalid_argument("input dimension mismatch");
}

Eigen::Index RffClassifierProblem::theta_dim() const {
  return num_classes_ * map_.feature_count();
}

Eigen::VectorXd RffClassifierProblem::initial_mean() const {
  return Eigen::VectorXd::Zero(theta_dim());
}

Eigen::VectorXd RffClassifierProblem::initial_eta() const {
  Eigen::VectorXd eta(2);
  eta[0] = inv_softplus(kernel_init_.length_scale);
  eta[1] = inv_softplus(kernel_init_.output_scale);
  return eta;
}

KernelParams RffClassifierProblem::kernel_from_eta(
    const Eigen::VectorXd& eta) const {
  if (eta.size() != 2)
    throw std::invalid_argument("RffClassifierProblem: eta must have size 2");
  return {softplus(eta[0]), softplus(eta[1])};
}

double RffClassifierProblem::loglik(const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& eta,
                                    Eigen::VectorXd* grad_theta,
                                    Eigen::VectorXd* grad_eta) const {
  const KernelParams params = kernel_from_eta(eta);
  const FeatureMatrix phi = featurize(map_, params, X_);
  const Eigen::Index r = map_.feature_count();
  const Eigen::Map<const Eigen::MatrixXd> head(theta.data(), num_classes_, r);

  const Eigen::MatrixXd logits = phi.values * head.transpose();
  Eigen::MatrixXd g = -softmax_rows(logits);
  double value = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double row_max = logits.row(i).maxCoeff();
    const double lse =
        row_max +
        std::log((logits.row(i).array() - row_max).exp().sum());
    value += logits(i, labels0_[i]) - lse;
    g(i, labels0_[i]) += 1.0;
  }

  if (grad_theta != nullptr) {
    grad_theta->resize(theta_dim());
    Eigen::Map<Eigen::MatrixXd>(grad_theta->data(), num_classes_, r) =
        g.transpose() * phi.values;
  }
  if (grad_eta != nullptr) {
    const FeatureJacobians jac = feature_jacobians(map_, params, X_);
    const Eigen::MatrixXd d_phi = g * head;  // N x R
    grad_eta->resize(2);
    (*grad_eta)[0] = d_phi.cwiseProduct(jac.d_length_scale).sum() *
                     softplus_grad(eta[0]);
    (*grad_eta)[1] = d_phi.cwiseProduct(jac.d_output_scale).sum() *
                     softplus_grad(eta[1]);
  }
  return value;
}

double RffClassifierProblem::kl(const IsotropicGaussianQ& q,
                                const PriorScales& /*scales*/,
                                Eigen::VectorXd* grad_mean,
                                double* grad_variance) const {
  q.validate();
  const double d = static_cast<double>(theta_dim());
  const double kl_value = 0.5 * (q.variance * d + q.mean.squaredNorm() - d -
                                 d * std::log(q.variance));
  if (grad_mean != nullptr) *grad_mean = q.mean;
  if (grad_variance != nullptr)
    *grad_variance = 0.5 * (d - d / q.variance);
  return kl_value;
}

RffClassifier RffClassifierProblem::model_from(
    const IsotropicGaussianQ& q, const Eigen::VectorXd& eta) const {
  return RffClassifier{
      map_, kernel_from_eta(eta),
      Eigen::Map<const Eigen::MatrixXd>(q.mean.data(), num_classes_,
                                        map_.feature_count()),
      q.variance};
}

double accuracy(const Eigen::MatrixXd& probabilities,
                const Eigen::VectorXi& labels1) {
  if (probabilities.rows() != labels1.size())
    throw std::invalid_argument("accuracy: size mismatch");
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    Eigen::Index arg = 0;
    probabilities.row(i).maxCoeff(&arg);
    if (arg == labels1[i] - 1) ++correct;
  }
  return static_cast<double>(correct) /
         static_cast<double>(probabilities.rows());
}

double mean_nll(const Eigen::MatrixXd& probabilities,
                const Eigen::VectorXi& labels1) {
  if (probabilities.rows() != labels1.size())
    throw std::invalid_argument("mean_nll: size mismatch");
  double nll = 0.0;
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    const double p = probabilities(i, labels1[i] - 1);
    nll -= std::log(std::max(p, 1e-300));
  }
  return nll / static_cast<double>(probabilities.rows());
}

SplitIndices stratified_split(const Eigen::VectorXi& labels1,
                              std::uint64_t seed) {
  const int num_classes = labels1.maxCoeff();
  std::vector<std::vector<Eigen::Index>> by_class(num_classes);
  for (Eigen::Index i = 0; i < labels1.size(); ++i) {
    if (labels1[i] < 1)
      throw std::invalid_argument("stratified_split: labels must be >= 1");
    by_class[labels1[i] - 1].push_back(i);
  }
  Rng rng(seed);
  SplitIndices split;
  for (auto& indices : by_class) {
    // Fisher-Yates on each class's index list.
    for (std::size_t j = indices.size(); j > 1; --j)
      std::swap(indices[j - 1], indices[rng.below(j)]);
    std::size_t class_train = 0, class_val = 0;
    for (std::size_t j = 0; j < indices.size(); ++j) {
      if (j % 5 == 4) {
        split.validation.push_back(indices[j]);
        ++class_val;
      } else {
        split.train.push_back(indices[j]);
        ++class_train;
      }
    }
    if (class_train == 0 || class_val == 0)
      throw std::invalid_argument(
          "stratified_split: a class is absent from a stratum");
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X,
                          const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = X.row(rows[i]);
  return out;
}

Eigen::VectorXi take_labels(const Eigen::VectorXi& labels,
                            const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = labels[rows[i]];
  return out;
}

}  // namespace

MapPoint fit_map_point(const ToyBackbone& backbone,
                       const GaussianPrior& backbone_prior_base,
                       double alpha, double beta, Eigen::Index num_classes,
                       const Eigen::MatrixXd& X,
                       const Eigen::VectorXi& labels1, double learning_rate,
                       int epochs, const Eigen::VectorXd& init_backbone) {
  if (alpha < 0.0 || beta < 0.0)
    throw std::invalid_argument("fit_map_point: penalties must be >= 0");
  if (epochs < 1)
    throw std::invalid_argument("fit_map_point: epochs must be >= 1");
  const Eigen::VectorXi labels0 = to_zero_based(labels1, num_classes);
  const Eigen::Index f = backbone.weight_count();
  const Eigen::Index hc = num_classes * backbone.feature_dim();

  Eigen::VectorXd params = Eigen::VectorXd::Zero(f + hc);
  params.head(f) = init_backbone;
  AdamState adam(f + hc);
  Eigen::VectorXd grad(f + hc);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const Eigen::Map<const Eigen::MatrixXd> head(params.data() + f,
                                                 num_classes,
                                                 backbone.feature_dim());
    const TransferLoglikGrad g =
        transfer_loglik_grad(backbone, params.head(f), head, X, labels0);
    grad.head(f) = g.d_backbone;
    grad.tail(hc) = g.d_head.reshaped();
    if (alpha > 0.0)
      grad.head(f) -= alpha * backbone_prior_base.base_solve(
                                  params.head(f) - backbone_prior_base.mean());
    if (beta > 0.0) grad.tail(hc) -= beta * params.tail(hc);
    adam.step(params, grad, learning_rate);
    if (!params.allFinite())
      throw std::runtime_error("fit_map_point: parameters diverged");
  }

  MapPoint out;
  out.backbone = params.head(f);
  out.head = Eigen::Map<const Eigen::MatrixXd>(params.data() + f, num_classes,
                                               backbone.feature_dim());
  const Eigen::MatrixXd z = backbone.encode(out.backbone, X);
  out.train_loglik = categorical_loglik(out.head, z, labels1);
  return out;
}

MapFitResult fit_map_grid_search(const ToyBackbone& backbone,
                                 const GaussianPrior& backbone_prior_base,
                                 Eigen::Index num_classes,
                                 const Eigen::MatrixXd& X,
                                 const Eigen::VectorXi& labels1,
                                 const MapGrid& grids,
                                 const std::vector<double>& learning_rates,
                                 int epochs, std::uint64_t split_seed) {
  if (grids.alpha.empty() || grids.beta.empty())
    throw std::invalid_argument("fit_map_grid_search: empty grid");
  if (learning_rates.empty())
    throw std::invalid_argument("fit_map_grid_search: no learning rates");
  if (X.rows() < 5)
    throw std::invalid_argument("fit_map_grid_search: need N >= 5");

  const SplitIndices split = stratified_split(labels1, split_seed);
  const Eigen::MatrixXd X_train = take_rows(X, split.train);
  const Eigen::VectorXi y_train = take_labels(labels1, split.train);
  const Eigen::MatrixXd X_val = take_rows(X, split.validation);
  const Eigen::VectorXi y_val = take_labels(labels1, split.validation);

  auto better = [](const MapCell& a, const MapCell& b) {
    // Value-based ordering, so the selection does not depend on the
    // order grid entries were listed in.
    return std::make_tuple(a.validation_nll, a.alpha, a.beta,
                           a.learning_rate) <
           std::make_tuple(b.validation_nll, b.alpha, b.beta,
                           b.learning_rate);
  };

  auto run_cell = [&](double alpha, double beta, double lr) {
    MapCell cell{alpha, beta, lr, 0.0, 0.0, false};
    try {
      const MapPoint point = fit_map_point(
          backbone, backbone_prior_base, alpha, beta, num_classes, X_train,
          y_train, lr, epochs, backbone_prior_base.mean());
      ToyTransferModel model{backbone, point.backbone, point.head, 1.0,
                             backbone_prior_base.mean()};
      cell.validation_nll = mean_nll(predict_point(model, X_val), y_val);
      cell.train_loglik = point.train_loglik;
      if (!std::isfinite(cell.validation_nll)) cell.failed = true;
    } catch (const std::exception&) {
      cell.failed = true;
    }
    return cell;
  };

  // Cells are independent; run them concurrently and select afterwards.
  std::vector<std::future<MapCell>> futures;
  for (double alpha : grids.alpha)
    for (double beta : grids.beta)
      for (double lr : learning_rates)
        futures.push_back(std::async(std::launch::async, run_cell, alpha,
                                     beta, lr));

  MapFitResult result;
  bool have_winner = false;
  for (auto& future : futures) {
    const MapCell cell = future.get();
    if (!cell.failed && (!have_winner || better(cell, result.winner))) {
      result.winner = cell;
      have_winner = true;
    }
    result.cells.push_back(cell);
  }
  if (!have_winner)
    throw std::runtime_error("fit_map_grid_search: every cell failed");

  // Refit on the merged train + validation data at the winning cell.
  const MapPoint refit = fit_map_point(
      backbone, backbone_prior_base, result.winner.alpha, result.winner.beta,
      num_classes, X, labels1, result.winner.learning_rate, epochs,
      backbone_prior_base.mean());
  result.backbone = refit.backbone;
  result.head = refit.head;
  return result;
}

ClassifierFit fit_de_elbo_classifier(const ToyBackbone& backbone,
                                     const Eigen::VectorXd& pretrained_mean,
                                     const PriorSpec& prior,
                                     const Eigen::MatrixXd& X,
                                     const Eigen::VectorXi& labels1,
                                     Eigen::Index num_classes,
                                     const TemperedObjectiveConfig& config,
                                     const std::vector<double>& learning_rates,
                                     int epochs) {
  TransferClassifierProblem problem(
      backbone, prior.build_backbone_prior(pretrained_mean),
      prior.initial_tau, num_classes, X, labels1);
  ClassifierFit out{ToyTransferModel{backbone, {}, {}, 1.0, pretrained_mean},
                    fit(problem, config, learning_rates, epochs)};
  out.model = problem.model_from(out.engine.winner().q);
  return out;
}

}  // namespace deelbo
