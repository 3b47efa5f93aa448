#ifndef OBLIVION_NNET_HPP
#define OBLIVION_NNET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oblivion/paramspace.hpp"

namespace oblivion {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { relu, tanh };
enum class Optimizer { sgd, adam };

Activation parse_activation(const std::string& name);
Optimizer parse_optimizer(const std::string& name);
std::string to_string(Activation a);
std::string to_string(Optimizer o);

struct NetArch {
  std::vector<Index> layer_sizes;  // input, hidden..., output (= classes)
  Activation activation = Activation::relu;

  void validate() const;
  Index input_size() const { return layer_sizes.front(); }
  Index num_classes() const { return layer_sizes.back(); }
  ParamLayout layout() const;
};

struct TrainConfig {
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs_per_block = 5;
  int batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DenseLayer {
  RowMatrix weight;  // out x in
  Eigen::VectorXd bias;
};

/// Feed-forward classifier: affine layers, hidden activation, softmax head.
class NetModel {
 public:
  explicit NetModel(NetArch arch);

  const NetArch& arch() const { return arch_; }
  const LayoutPtr& layout() const { return layout_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Logits for a column-per-sample input block.
  Eigen::MatrixXd logits(const Eigen::MatrixXd& inputs) const;

 private:
  NetArch arch_;
  LayoutPtr layout_;
  std::vector<DenseLayer> layers_;
};

/// A set of training samples stored one per column.
struct DataBlock {
  Eigen::MatrixXd features;  // feature_dim x n
  std::vector<int> labels;

  Index size() const { return features.cols(); }
  bool empty() const { return features.cols() == 0; }
};

ParamVector flatten(const NetModel& model);
NetModel load_into(NetModel model, const ParamVector& params);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
NetModel init_model(const NetArch& arch, std::uint64_t seed);

/// Column-wise softmax.
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits);

struct LossGrad {
  double loss;
  ParamVector grad;
};

/// Mean cross-entropy over the samples and its gradient in layout order.
LossGrad loss_and_grad(const NetModel& model, const Eigen::MatrixXd& inputs,
                       const std::vector<int>& labels);
LossGrad loss_and_grad(const NetModel& model, const DataBlock& batch);

/// Argmax of the softmax output, lowest index on ties.
int predict(const NetModel& model, const Eigen::VectorXd& x);
std::vector<int> predict_all(const NetModel& model, const Eigen::MatrixXd& inputs);

/// Runs cfg.epochs_per_block epochs of mini-batch descent over the block in
/// stored order. Optimizer state starts fresh for every call. The block index
/// is accepted for tracing only; no randomness is drawn.
NetModel train_block(const NetModel& model, const DataBlock& block,
                     const TrainConfig& cfg, std::size_t block_index);

}  // namespace oblivion

#endif  // OBLIVION_NNET_HPP
