#pragma once

// Tiny CNN + LSTM trace classifier.
//
//   input (input_len) -> [conv(kernel, stride) -> activation] x conv_layers
//     -> one scalar per remaining position, fed as a sequence into an LSTM
//        cell with lstm_hidden units -> softmax over the last hidden state.
//
// With the defaults the feature chain is 480 -> 456 -> 432 -> 408 and the
// model holds 3 * 26 + 32 = 110 parameters.
//
// Flat parameter layout:
//   for each conv layer l:  w_l[kernel], b_l
//   LSTM weights W_i, W_f, W_g, W_o, each lstm_hidden x (lstm_input + lstm_hidden),
//     row-major, columns ordered [x_t, h_{t-1}]
//   LSTM biases b_i, b_f, b_g, b_o, each lstm_hidden
// Output logits are (h_T[0], h_T[1]) for (Event, NoEvent).

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "spinread/core.hpp"

namespace spinread {

enum class Activation { Relu, Tanh, Identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view text);

struct DnnConfig {
  std::size_t input_len = 480;
  std::size_t conv_layers = 3;
  std::size_t kernel = 25;
  std::size_t stride = 1;
  std::size_t conv_channels = 1;
  Activation conv_activation = Activation::Relu;
  std::size_t lstm_hidden = 2;
  std::size_t lstm_input = 1;

  // Shape checks needed to count parameters.
  void validate() const;
  // Additionally requires a runnable network (2 output units, 1 channel).
  void validate_runnable() const;

  // Sequence lengths from the input through every conv layer.
  std::vector<std::size_t> feature_lengths() const;

  friend bool operator==(const DnnConfig&, const DnnConfig&) = default;
};

struct ParamCount {
  std::size_t lstm;
  std::size_t total;
};

ParamCount param_count(const DnnConfig& cfg);

// Offsets into the flat parameter vector.
struct ParamLayout {
  explicit ParamLayout(const DnnConfig& cfg);

  std::size_t conv_weight(std::size_t layer) const { return layer * (kernel_ + 1); }
  std::size_t conv_bias(std::size_t layer) const { return layer * (kernel_ + 1) + kernel_; }
  // gate: 0 = input, 1 = forget, 2 = candidate, 3 = output
  std::size_t lstm_weight(std::size_t gate) const { return lstm_base_ + gate * gate_w_; }
  std::size_t lstm_bias(std::size_t gate) const {
    return lstm_base_ + 4 * gate_w_ + gate * hidden_;
  }
  std::size_t total() const { return lstm_base_ + 4 * gate_w_ + 4 * hidden_; }

 private:
  std::size_t kernel_;
  std::size_t hidden_;
  std::size_t lstm_base_;
  std::size_t gate_w_;
};

struct DnnModel {
  DnnConfig config;
  std::vector<double> params;

  DnnModel() = default;
  DnnModel(DnnConfig cfg, std::vector<double> p);
  static DnnModel zeros(const DnnConfig& cfg);
};

struct Prediction {
  std::array<double, 2> probs{};  // (p_event, p_noevent)
  Label label = Label::Event;
};

Prediction forward(const DnnModel& model, const Trace& trace);

// Outputs of each conv layer after activation; first entry is the input.
std::vector<std::vector<double>> conv_features(const DnnModel& model, const Trace& trace);

// Cross-entropy of the true label.
double loss(const DnnModel& model, const Trace& trace, Label label);

struct GradientResult {
  std::vector<double> grad;
  double loss = 0.0;
  Prediction prediction;
  // d loss / d logits, i.e. probs - onehot.
  std::array<double, 2> logit_grad{};
};

GradientResult backward(const DnnModel& model, const Trace& trace, Label label);

enum class OptimizerKind { Sgd, Adam };
enum class InitKind { UniformFanIn, Zeros };

std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view text);
std::string_view to_string(InitKind k);
InitKind init_from_string(std::string_view text);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 3e-3;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  InitKind init = InitKind::UniformFanIn;
  // Weights ~ U(-a, a) with a = init_scale / sqrt(fan_in). LSTM biases start
  // at 0; conv biases at conv_bias_init so the ReLU stack starts active.
  double init_scale = 0.5;
  double conv_bias_init = 0.1;
  // Rescales the batch-mean gradient to at most this L2 norm. 0 disables.
  double clip_norm = 1.0;

  void validate() const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

struct TrainResult {
  // Parameters at the end of the epoch with the lowest mean loss. Late Adam
  // steps can kill the ReLU stack and leave the loss stuck at ln 2.
  DnnModel model;
  std::vector<double> loss_history;  // mean training loss per epoch
  std::size_t best_epoch = 0;        // 0-based index into loss_history
};

DnnModel init_model(const DnnConfig& cfg, const TrainConfig& train_cfg);

// Mini-batch training on cross-entropy. Deterministic for a fixed seed.
TrainResult train(const LabeledDataset& train_set, const DnnConfig& dnn_cfg,
                  const TrainConfig& train_cfg);

std::vector<Label> predict_labels(const DnnModel& model, std::span<const Trace> traces);

// Text model file, version 1. Parameters are written in shortest round-trip
// decimal form, so save/load is bit-exact.
void save_model(std::ostream& os, const DnnModel& model);
DnnModel load_model(std::istream& is);
void save_model(const std::filesystem::path& path, const DnnModel& model);
DnnModel load_model(const std::filesystem::path& path);

}  // namespace spinread
