#include "oblivion/nnet.hpp"

#include <cmath>

#include "oblivion/random.hpp"

namespace oblivion {

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw Error("unknown activation '" + name + "' (expected relu|tanh)");
}

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  throw Error("unknown optimizer '" + name + "' (expected sgd|adam)");
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

void NetArch::validate() const {
  if (layer_sizes.size() < 2) throw Error("architecture needs at least input and output sizes");
  for (Index s : layer_sizes) {
    if (s <= 0) throw Error("layer sizes must be positive");
  }
}

ParamLayout NetArch::layout() const {
  validate();
  ParamLayout layout;
  for (std::size_t l = 1; l < layer_sizes.size(); ++l) {
    const std::string tag = "layer" + std::to_string(l - 1);
    layout.add_segment(tag + ".weight", {layer_sizes[l], layer_sizes[l - 1]});
    layout.add_segment(tag + ".bias", {layer_sizes[l]});
  }
  return layout;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error("learning rate must be finite and non-negative");
  }
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw Error("adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) throw Error("adam epsilon must be positive");
  if (epochs_per_block <= 0) throw Error("epochs per block must be positive");
  if (batch_size <= 0) throw Error("batch size must be positive");
}

NetModel::NetModel(NetArch arch)
    : arch_(std::move(arch)), layout_(std::make_shared<const ParamLayout>(arch_.layout())) {
  const auto& sizes = arch_.layer_sizes;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    layers_.push_back({RowMatrix::Zero(sizes[l], sizes[l - 1]), Eigen::VectorXd::Zero(sizes[l])});
  }
}

namespace {

Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& z) {
  if (act == Activation::relu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

// Derivative expressed through the pre-activation z and activation a.
Eigen::MatrixXd activation_slope(Activation act, const Eigen::MatrixXd& z,
                                 const Eigen::MatrixXd& a) {
  if (act == Activation::relu) return (z.array() > 0.0).cast<double>().matrix();
  return (1.0 - a.array().square()).matrix();
}

void check_input(const NetModel& model, Index rows) {
  if (rows != model.arch().input_size()) {
    throw Error("input dimension " + std::to_string(rows) + " does not match network input " +
                std::to_string(model.arch().input_size()));
  }
}

}  // namespace

Eigen::MatrixXd NetModel::logits(const Eigen::MatrixXd& inputs) const {
  check_input(*this, inputs.rows());
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    a = (l + 1 < layers_.size()) ? activate(arch_.activation, z) : std::move(z);
  }
  return a;
}

ParamVector flatten(const NetModel& model) {
  Eigen::VectorXd values(model.layout()->total_len());
  Index pos = 0;
  for (const auto& layer : model.layers()) {
    const Index nw = layer.weight.size();
    values.segment(pos, nw) = Eigen::Map<const Eigen::VectorXd>(layer.weight.data(), nw);
    pos += nw;
    values.segment(pos, layer.bias.size()) = layer.bias;
    pos += layer.bias.size();
  }
  return ParamVector(model.layout(), std::move(values));
}

NetModel load_into(NetModel model, const ParamVector& params) {
  if (!(params.layout() == *model.layout())) {
    throw LayoutMismatch("cannot load [" + params.layout().describe() + "] into model [" +
                         model.layout()->describe() + "]");
  }
  Index pos = 0;
  const Eigen::VectorXd& v = params.values();
  for (auto& layer : model.layers()) {
    const Index nw = layer.weight.size();
    Eigen::Map<Eigen::VectorXd>(layer.weight.data(), nw) = v.segment(pos, nw);
    pos += nw;
    layer.bias = v.segment(pos, layer.bias.size());
    pos += layer.bias.size();
  }
  return model;
}

NetModel init_model(const NetArch& arch, std::uint64_t seed) {
  arch.validate();
  NetModel model(arch);
  Rng rng(derive_seed(seed, "init_model"));
  for (auto& layer : model.layers()) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Index r = 0; r < layer.weight.rows(); ++r) {
      for (Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = rng.uniform(-limit, limit);
      }
    }
    layer.bias.setZero();
  }
  return model;
}

Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Index j = 0; j < logits.cols(); ++j) {
    const double peak = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - peak).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

LossGrad loss_and_grad(const NetModel& model, const Eigen::MatrixXd& inputs,
                       const std::vector<int>& labels) {
  check_input(model, inputs.rows());
  const Index n = inputs.cols();
  if (n == 0) throw Error("loss_and_grad on an empty batch");
  if (static_cast<Index>(labels.size()) != n) throw Error("label count does not match batch");

  const auto& layers = model.layers();
  const std::size_t depth = layers.size();
  std::vector<Eigen::MatrixXd> pre(depth), post(depth + 1);
  post[0] = inputs;
  for (std::size_t l = 0; l < depth; ++l) {
    pre[l] = layers[l].weight * post[l];
    pre[l].colwise() += layers[l].bias;
    post[l + 1] = (l + 1 < depth) ? activate(model.arch().activation, pre[l]) : pre[l];
  }

  const Eigen::MatrixXd& z = pre.back();
  const Index classes = z.rows();
  Eigen::MatrixXd delta(classes, n);
  double loss = 0.0;
  for (Index j = 0; j < n; ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    if (y < 0 || y >= classes) throw Error("label out of range in batch");
    const double peak = z.col(j).maxCoeff();
    const Eigen::VectorXd shifted = z.col(j).array() - peak;
    const double log_norm = std::log(shifted.array().exp().sum());
    loss -= shifted[y] - log_norm;
    delta.col(j) = (shifted.array() - log_norm).exp().matrix();
    delta(y, j) -= 1.0;
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw TrainingDiverged("non-finite loss");
  delta /= static_cast<double>(n);

  std::vector<RowMatrix> grad_w(depth);
  std::vector<Eigen::VectorXd> grad_b(depth);
  for (std::size_t l = depth; l-- > 0;) {
    grad_w[l] = delta * post[l].transpose();
    grad_b[l] = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = layers[l].weight.transpose() * delta;
      delta = back.cwiseProduct(activation_slope(model.arch().activation, pre[l - 1], post[l]));
    }
  }

  Eigen::VectorXd flat(model.layout()->total_len());
  Index pos = 0;
  for (std::size_t l = 0; l < depth; ++l) {
    const Index nw = grad_w[l].size();
    flat.segment(pos, nw) = Eigen::Map<const Eigen::VectorXd>(grad_w[l].data(), nw);
    pos += nw;
    flat.segment(pos, grad_b[l].size()) = grad_b[l];
    pos += grad_b[l].size();
  }
  if (!flat.allFinite()) throw TrainingDiverged("non-finite gradient");
  return {loss, ParamVector(model.layout(), std::move(flat))};
}

LossGrad loss_and_grad(const NetModel& model, const DataBlock& batch) {
  return loss_and_grad(model, batch.features, batch.labels);
}

namespace {

int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& scores) {
  int best = 0;
  for (Index i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace

int predict(const NetModel& model, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd probs = softmax(model.logits(x));
  return argmax_lowest(probs.col(0));
}

std::vector<int> predict_all(const NetModel& model, const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd probs = softmax(model.logits(inputs));
  std::vector<int> out(static_cast<std::size_t>(probs.cols()));
  for (Index j = 0; j < probs.cols(); ++j) out[static_cast<std::size_t>(j)] = argmax_lowest(probs.col(j));
  return out;
}

NetModel train_block(const NetModel& model, const DataBlock& block, const TrainConfig& cfg,
                     std::size_t /*block_index*/) {
  cfg.validate();
  if (block.empty()) throw Error("train_block on an empty block");

  NetModel current = model;
  Eigen::VectorXd params = flatten(model).values();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(params.size());
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;

  const Index n = block.size();
  const Index bs = cfg.batch_size;
  for (int epoch = 0; epoch < cfg.epochs_per_block; ++epoch) {
    for (Index start = 0; start < n; start += bs) {
      const Index count = std::min(bs, n - start);
      const std::vector<int> labels(block.labels.begin() + start,
                                    block.labels.begin() + start + count);
      const LossGrad lg = loss_and_grad(current, block.features.middleCols(start, count), labels);
      const Eigen::VectorXd& g = lg.grad.values();
      if (cfg.optimizer == Optimizer::sgd) {
        params -= cfg.learning_rate * g;
      } else {
        beta1_pow *= cfg.adam_beta1;
        beta2_pow *= cfg.adam_beta2;
        m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
        v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
        const Eigen::ArrayXd m_hat = m.array() / (1.0 - beta1_pow);
        const Eigen::ArrayXd v_hat = v.array() / (1.0 - beta2_pow);
        params.array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
      }
      if (!params.allFinite()) throw TrainingDiverged("parameters diverged during training");
      current = load_into(std::move(current), ParamVector(current.layout(), params));
    }
  }
  return current;
}

}  // namespace oblivion
