#ifndef DEELBO_CLASSIFIER_HPP
#define DEELBO_CLASSIFIER_HPP

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "deelbo/engine.hpp"
#include "deelbo/feature_map.hpp"
#include "deelbo/prior.hpp"
#include "deelbo/rng.hpp"

namespace deelbo {

// Two-layer tanh encoder x -> tanh(W2 tanh(W1 x + b1) + b2), with an
// always-one feature appended as the LAST entry of the encoding, so the
// head's final column acts as a bias. Weights are packed column-major as
// [vec(W1) | b1 | vec(W2) | b2].
class ToyBackbone {
 public:
  ToyBackbone(Eigen::Index input_dim, Eigen::Index hidden_dim,
              Eigen::Index encode_dim);

  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index hidden_dim() const { return hidden_dim_; }
  Eigen::Index encode_dim() const { return encode_dim_; }
  // Encoding dimension seen by the head (always-one included).
  Eigen::Index feature_dim() const { return encode_dim_ + 1; }
  // F: number of backbone weights.
  Eigen::Index weight_count() const;

  // N x feature_dim encodings for the rows of X.
  Eigen::MatrixXd encode(const Eigen::VectorXd& weights,
                         const Eigen::MatrixXd& X) const;

  // Random initialization: W ~ N(0, 1/fan_in), biases zero.
  Eigen::VectorXd random_weights(Rng& rng) const;

 private:
  Eigen::Index input_dim_;
  Eigen::Index hidden_dim_;
  Eigen::Index encode_dim_;
};

// RFF classifier of the appendix model: vec(V) ~ N(0, I_{RC}),
// y_i ~ Cat(softmax(V phi(x_i))).
struct RffClassifier {
  RffFeatureMap feature_map;
  KernelParams kernel;
  Eigen::MatrixXd head_means;  // C x R
  double shared_variance = 1.0;
};

// Transfer classifier: backbone w with Gaussian prior around pretrained
// weights, linear head V over the encodings.
struct ToyTransferModel {
  ToyBackbone backbone;
  Eigen::VectorXd backbone_mean;   // F
  Eigen::MatrixXd head_mean;       // C x feature_dim
  double shared_variance = 1.0;
  Eigen::VectorXd pretrained_mean;  // F
};

// Backbone prior menu. l2_zero: N(0, lambda I); l2_sp: N(mu, lambda I);
// ptyl: N(mu, lambda * diag-plus-low-rank).
struct PriorSpec {
  enum class Variant { kL2Zero, kL2Sp, kPtyl };
  Variant variant = Variant::kL2Sp;
  double initial_lambda = 1.0;
  double initial_tau = 1.0;
  // PTYL pieces (ignored for the other variants).
  Eigen::VectorXd sigma_diag;
  Eigen::MatrixXd column_factors;

  GaussianPrior build_backbone_prior(
      const Eigen::VectorXd& pretrained_mean) const;
};

// sum_i log softmax(head z_i)[label_i]. Labels are 1-based here (the
// interface convention); everything downstream of this boundary is
// 0-based.
double categorical_loglik(const Eigen::MatrixXd& head,
                          const Eigen::MatrixXd& encodings,
                          const Eigen::VectorXi& labels);

// Log-likelihood with gradients for the transfer model, 0-based labels.
struct TransferLoglikGrad {
  double value = 0.0;
  Eigen::VectorXd d_backbone;
  Eigen::MatrixXd d_head;
};
TransferLoglikGrad transfer_loglik_grad(const ToyBackbone& backbone,
                                        const Eigen::VectorXd& weights,
                                        const Eigen::MatrixXd& head,
                                        const Eigen::MatrixXd& X,
                                        const Eigen::VectorXi& labels0);

// Class probabilities from the mean parameters (plug-in prediction).
Eigen::MatrixXd predict_point(const ToyTransferModel& model,
                              const Eigen::MatrixXd& X_star);
Eigen::MatrixXd predict_point(const RffClassifier& model,
                              const Eigen::MatrixXd& X_star);

// Class probabilities averaged over reparameterized posterior samples.
Eigen::MatrixXd predict_mc(const ToyTransferModel& model,
                           const Eigen::MatrixXd& X_star, int sample_count,
                           std::uint64_t seed);
Eigen::MatrixXd predict_mc(const RffClassifier& model,
                           const Eigen::MatrixXd& X_star, int sample_count,
                           std::uint64_t seed);

// Engine adapter for the transfer model. theta = [w | vec(V)]
// (column-major), closed-form lambda/tau updates, no gradient-learned
// eta.
class TransferClassifierProblem final : public VariationalProblem {
 public:
  TransferClassifierProblem(ToyBackbone backbone, GaussianPrior backbone_prior,
                            double initial_tau, Eigen::Index num_classes,
                            Eigen::MatrixXd X, Eigen::VectorXi labels1);

  Eigen::Index theta_dim() const override;
  Eigen::Index data_count() const override { return labels0_.size(); }
  Eigen::VectorXd initial_mean() const override;

  double loglik(const Eigen::VectorXd& theta, const Eigen::VectorXd& eta,
                Eigen::VectorXd* grad_theta,
                Eigen::VectorXd* grad_eta) const override;
  double kl(const IsotropicGaussianQ& q, const PriorScales& scales,
            Eigen::VectorXd* grad_mean,
            double* grad_variance) const override;

  bool has_closed_form_updates() const override { return true; }
  PriorScales initial_scales() const override;
  PriorScales closed_form_update(const IsotropicGaussianQ& q,
                                 const PriorScales& scales) const override;

  const ToyBackbone& backbone() const { return backbone_; }
  Eigen::Index num_classes() const { return num_classes_; }
  Eigen::Index head_dim() const {
    return num_classes_ * backbone_.feature_dim();
  }
  ToyTransferModel model_from(const IsotropicGaussianQ& q) const;

 private:
  ToyBackbone backbone_;
  GaussianPrior backbone_prior_;
  double initial_tau_;
  Eigen::Index num_classes_;
  Eigen::MatrixXd X_;
  Eigen::VectorXi labels0_;
};

// Engine adapter for the RFF classifier. theta = vec(V) with standard
// normal prior; eta = softplus-unconstrained kernel hyperparameters.
class RffClassifierProblem final : public VariationalProblem {
 public:
  RffClassifierProblem(RffFeatureMap map, KernelParams kernel_init,
                       Eigen::Index num_classes, Eigen::MatrixXd X,
                       Eigen::VectorXi labels1);

  Eigen::Index theta_dim() const override;
  Eigen::Index data_count() const override { return labels0_.size(); }
  Eigen::VectorXd initial_mean() const override;
  Eigen::VectorXd initial_eta() const override;

  double loglik(const Eigen::VectorXd& theta, const Eigen::VectorXd& eta,
                Eigen::VectorXd* grad_theta,
                Eigen::VectorXd* grad_eta) const override;
  double kl(const IsotropicGaussianQ& q, const PriorScales& scales,
            Eigen::VectorXd* grad_mean,
            double* grad_variance) const override;

  KernelParams kernel_from_eta(const Eigen::VectorXd& eta) const;
  RffClassifier model_from(const IsotropicGaussianQ& q,
                           const Eigen::VectorXd& eta) const;

 private:
  RffFeatureMap map_;
  KernelParams kernel_init_;
  Eigen::Index num_classes_;
  Eigen::MatrixXd X_;
  Eigen::VectorXi labels0_;
};

// MAP point estimation over a grid of penalty strengths, with a
// stratified 4/5 - 1/5 train/validation split, selection by validation
// NLL, and a refit on the merged data at the winning cell.
struct MapGrid {
  std::vector<double> alpha;  // backbone penalty 1/lambda; 0 allowed
  std::vector<double> beta;   // head penalty 1/tau; 0 allowed
};

struct MapCell {
  double alpha = 0.0;
  double beta = 0.0;
  double learning_rate = 0.0;
  double validation_nll = 0.0;
  double train_loglik = 0.0;
  bool failed = false;
};

struct MapFitResult {
  Eigen::VectorXd backbone;
  Eigen::MatrixXd head;
  MapCell winner;
  std::vector<MapCell> cells;
};

MapFitResult fit_map_grid_search(const ToyBackbone& backbone,
                                 const GaussianPrior& backbone_prior_base,
                                 Eigen::Index num_classes,
                                 const Eigen::MatrixXd& X,
                                 const Eigen::VectorXi& labels1,
                                 const MapGrid& grids,
                                 const std::vector<double>& learning_rates,
                                 int epochs, std::uint64_t split_seed);

// Single MAP fit at fixed penalties (also used for pretraining the
// source backbone).
struct MapPoint {
  Eigen::VectorXd backbone;
  Eigen::MatrixXd head;
  double train_loglik = 0.0;
};
MapPoint fit_map_point(const ToyBackbone& backbone,
                       const GaussianPrior& backbone_prior_base,
                       double alpha, double beta, Eigen::Index num_classes,
                       const Eigen::MatrixXd& X,
                       const Eigen::VectorXi& labels1, double learning_rate,
                       int epochs, const Eigen::VectorXd& init_backbone);

// DE-ELBo (or standard-ELBo) fit of the transfer classifier; delegates
// to the variational trainer with kappa = (F + HC) / N under the
// data-emphasized policy.
struct ClassifierFit {
  ToyTransferModel model;
  EngineFitResult engine;
};
ClassifierFit fit_de_elbo_classifier(const ToyBackbone& backbone,
                                     const Eigen::VectorXd& pretrained_mean,
                                     const PriorSpec& prior,
                                     const Eigen::MatrixXd& X,
                                     const Eigen::VectorXi& labels1,
                                     Eigen::Index num_classes,
                                     const TemperedObjectiveConfig& config,
                                     const std::vector<double>& learning_rates,
                                     int epochs);

// Accuracy of hard argmax predictions against 1-based labels.
double accuracy(const Eigen::MatrixXd& probabilities,
                const Eigen::VectorXi& labels1);

// Mean negative log predicted probability of the true classes.
double mean_nll(const Eigen::MatrixXd& probabilities,
                const Eigen::VectorXi& labels1);

// Stratified per-class round-robin split: within each class's shuffled
// index list, every 5th example goes to validation. Throws if any class
// ends up absent from either stratum.
struct SplitIndices {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> validation;
};
SplitIndices stratified_split(const Eigen::VectorXi& labels1,
                              std::uint64_t seed);

}  // namespace deelbo

#endif  // DEELBO_CLASSIFIER_HPP
