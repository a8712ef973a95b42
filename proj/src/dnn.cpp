#include "spinread/dnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "spinread/trace_io.hpp"

namespace spinread {
namespace {

constexpr std::size_t kGates = 4;
constexpr std::string_view kModelMagic = "spinread-model 1";

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Relu:
      return x > 0.0 ? x : 0.0;
    case Activation::Tanh:
      return std::tanh(x);
    case Activation::Identity:
      return x;
  }
  return x;
}

// Derivative expressed through the pre-activation and the output.
double activate_grad(Activation a, double pre, double out) {
  switch (a) {
    case Activation::Relu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh:
      return 1.0 - out * out;
    case Activation::Identity:
      return 1.0;
  }
  return 1.0;
}

// Per-trace activations kept for the backward pass. Reused across calls to
// avoid reallocating inside the training loop.
struct Workspace {
  std::vector<std::vector<double>> pre;   // conv pre-activations, one per layer
  std::vector<std::vector<double>> act;   // act[0] = input, act[l + 1] = layer l output
  std::vector<double> gates;              // T x 4 x H, post-nonlinearity
  std::vector<double> cell;               // (T + 1) x H, cell[0] = 0
  std::vector<double> hidden;             // (T + 1) x H, hidden[0] = 0
  std::vector<double> cell_tanh;          // T x H
  std::array<double, 2> probs{};
};

class Network {
 public:
  explicit Network(const DnnModel& model)
      : cfg_(model.config), p_(model.params), layout_(model.config) {
    cfg_.validate_runnable();
    if (p_.size() != layout_.total()) {
      throw std::invalid_argument("parameter vector has " + std::to_string(p_.size()) +
                                  " entries, config needs " + std::to_string(layout_.total()));
    }
    lengths_ = cfg_.feature_lengths();
  }

  void run(const Trace& trace, Workspace& ws) const {
    if (trace.size() != cfg_.input_len) {
      throw std::invalid_argument("trace length " + std::to_string(trace.size()) +
                                  " does not match network input " +
                                  std::to_string(cfg_.input_len));
    }
    const std::size_t L = cfg_.conv_layers;
    const std::size_t K = cfg_.kernel;
    const std::size_t S = cfg_.stride;
    ws.pre.resize(L);
    ws.act.resize(L + 1);
    ws.act[0].assign(trace.samples().begin(), trace.samples().end());
    for (std::size_t l = 0; l < L; ++l) {
      const double* w = &p_[layout_.conv_weight(l)];
      const double b = p_[layout_.conv_bias(l)];
      const std::vector<double>& in = ws.act[l];
      const std::size_t n_out = lengths_[l + 1];
      ws.pre[l].resize(n_out);
      ws.act[l + 1].resize(n_out);
      for (std::size_t j = 0; j < n_out; ++j) {
        const double* x = &in[j * S];
        double z = b;
        for (std::size_t k = 0; k < K; ++k) z += w[k] * x[k];
        ws.pre[l][j] = z;
        ws.act[l + 1][j] = activate(cfg_.conv_activation, z);
      }
    }

    const std::vector<double>& seq = ws.act[L];
    const std::size_t T = seq.size();
    const std::size_t H = cfg_.lstm_hidden;
    const std::size_t Z = cfg_.lstm_input + H;
    ws.gates.resize(T * kGates * H);
    ws.cell.assign((T + 1) * H, 0.0);
    ws.hidden.assign((T + 1) * H, 0.0);
    ws.cell_tanh.resize(T * H);
    for (std::size_t t = 0; t < T; ++t) {
      const double* h_prev = &ws.hidden[t * H];
      const double* c_prev = &ws.cell[t * H];
      double* g = &ws.gates[t * kGates * H];
      for (std::size_t q = 0; q < kGates; ++q) {
        const double* W = &p_[layout_.lstm_weight(q)];
        const double* bq = &p_[layout_.lstm_bias(q)];
        for (std::size_t u = 0; u < H; ++u) {
          const double* row = W + u * Z;
          double z = bq[u] + row[0] * seq[t];
          for (std::size_t v = 0; v < H; ++v) z += row[1 + v] * h_prev[v];
          g[q * H + u] = (q == 2) ? std::tanh(z) : sigmoid(z);
        }
      }
      double* c = &ws.cell[(t + 1) * H];
      double* h = &ws.hidden[(t + 1) * H];
      for (std::size_t u = 0; u < H; ++u) {
        c[u] = g[1 * H + u] * c_prev[u] + g[0 * H + u] * g[2 * H + u];
        const double tc = std::tanh(c[u]);
        ws.cell_tanh[t * H + u] = tc;
        h[u] = g[3 * H + u] * tc;
      }
    }

    const double* h_last = &ws.hidden[T * H];
    const double m = std::max(h_last[0], h_last[1]);
    const double e0 = std::exp(h_last[0] - m);
    const double e1 = std::exp(h_last[1] - m);
    ws.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
  }

  // Accumulates d loss / d params into `grad`. Returns the loss.
  double accumulate_grad(const Workspace& ws, Label label, std::vector<double>& grad,
                         std::array<double, 2>* logit_grad = nullptr) const {
    const std::size_t L = cfg_.conv_layers;
    const std::size_t K = cfg_.kernel;
    const std::size_t S = cfg_.stride;
    const std::size_t H = cfg_.lstm_hidden;
    const std::size_t Z = cfg_.lstm_input + H;
    const std::vector<double>& seq = ws.act[L];
    const std::size_t T = seq.size();

    const int target = static_cast<int>(label);
    const double loss = -std::log(ws.probs[target]);

    std::vector<double> dh(H, 0.0);
    std::vector<double> dc(H, 0.0);
    std::vector<double> dz(kGates * H);
    std::vector<double> dseq(T, 0.0);
    for (std::size_t u = 0; u < H; ++u) dh[u] = ws.probs[u] - (static_cast<int>(u) == target);
    if (logit_grad) *logit_grad = {dh[0], dh[1]};

    for (std::size_t t = T; t-- > 0;) {
      const double* g = &ws.gates[t * kGates * H];
      const double* c_prev = &ws.cell[t * H];
      const double* h_prev = &ws.hidden[t * H];
      for (std::size_t u = 0; u < H; ++u) {
        const double i = g[0 * H + u], f = g[1 * H + u], cand = g[2 * H + u], o = g[3 * H + u];
        const double tc = ws.cell_tanh[t * H + u];
        const double d_o = dh[u] * tc;
        const double d_c = dc[u] + dh[u] * o * (1.0 - tc * tc);
        dz[0 * H + u] = d_c * cand * i * (1.0 - i);
        dz[1 * H + u] = d_c * c_prev[u] * f * (1.0 - f);
        dz[2 * H + u] = d_c * i * (1.0 - cand * cand);
        dz[3 * H + u] = d_o * o * (1.0 - o);
        dc[u] = d_c * f;
      }
      std::fill(dh.begin(), dh.end(), 0.0);
      double dx = 0.0;
      for (std::size_t q = 0; q < kGates; ++q) {
        const std::size_t w_off = layout_.lstm_weight(q);
        const std::size_t b_off = layout_.lstm_bias(q);
        for (std::size_t u = 0; u < H; ++u) {
          const double d = dz[q * H + u];
          const double* row = &p_[w_off + u * Z];
          double* grow = &grad[w_off + u * Z];
          grow[0] += d * seq[t];
          dx += d * row[0];
          for (std::size_t v = 0; v < H; ++v) {
            grow[1 + v] += d * h_prev[v];
            dh[v] += d * row[1 + v];
          }
          grad[b_off + u] += d;
        }
      }
      dseq[t] = dx;
    }

    std::vector<double> d_out = std::move(dseq);
    for (std::size_t l = L; l-- > 0;) {
      const std::vector<double>& in = ws.act[l];
      const std::vector<double>& pre = ws.pre[l];
      const std::vector<double>& out = ws.act[l + 1];
      const std::size_t w_off = layout_.conv_weight(l);
      const double* w = &p_[w_off];
      double* gw = &grad[w_off];
      double gb = 0.0;
      std::vector<double> d_in(l > 0 ? in.size() : 0, 0.0);
      for (std::size_t j = 0; j < out.size(); ++j) {
        const double d = d_out[j] * activate_grad(cfg_.conv_activation, pre[j], out[j]);
        if (d == 0.0) continue;
        gb += d;
        const double* x = &in[j * S];
        for (std::size_t k = 0; k < K; ++k) gw[k] += d * x[k];
        if (l > 0) {
          double* dx = &d_in[j * S];
          for (std::size_t k = 0; k < K; ++k) dx[k] += d * w[k];
        }
      }
      grad[layout_.conv_bias(l)] += gb;
      d_out = std::move(d_in);
    }
    return loss;
  }

  const DnnConfig& config() const { return cfg_; }

 private:
  DnnConfig cfg_;
  const std::vector<double>& p_;
  ParamLayout layout_;
  std::vector<std::size_t> lengths_;
};

Prediction make_prediction(const std::array<double, 2>& probs) {
  Prediction pred;
  pred.probs = probs;
  pred.label = probs[0] >= probs[1] ? Label::Event : Label::NoEvent;
  return pred;
}

std::size_t checked_size(std::string_view text) {
  std::size_t v = 0;
  std::istringstream ss{std::string(text)};
  if (!(ss >> v) || !ss.eof()) throw std::runtime_error("invalid count '" + std::string(text) + "'");
  return v;
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu:
      return "relu";
    case Activation::Tanh:
      return "tanh";
    case Activation::Identity:
      return "identity";
  }
  return "relu";
}

Activation activation_from_string(std::string_view text) {
  if (text == "relu") return Activation::Relu;
  if (text == "tanh") return Activation::Tanh;
  if (text == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + std::string(text) + "'");
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(std::string_view text) {
  if (text == "adam") return OptimizerKind::Adam;
  if (text == "sgd") return OptimizerKind::Sgd;
  throw std::invalid_argument("unknown optimizer '" + std::string(text) + "'");
}

std::string_view to_string(InitKind k) {
  return k == InitKind::UniformFanIn ? "uniform_fan_in" : "zeros";
}

InitKind init_from_string(std::string_view text) {
  if (text == "uniform_fan_in") return InitKind::UniformFanIn;
  if (text == "zeros") return InitKind::Zeros;
  throw std::invalid_argument("unknown init '" + std::string(text) + "'");
}

void DnnConfig::validate() const {
  if (conv_layers < 1 || kernel < 1 || stride < 1) {
    throw std::invalid_argument("conv layers, kernel and stride must be >= 1");
  }
  if (lstm_hidden < 1 || lstm_input < 1) {
    throw std::invalid_argument("lstm sizes must be >= 1");
  }
  if (conv_channels != 1) throw std::invalid_argument("only single-channel convolutions exist");
}

void DnnConfig::validate_runnable() const {
  validate();
  if (lstm_hidden != 2) {
    throw std::invalid_argument("softmax head reads two classes from the hidden state: lstm_hidden must be 2");
  }
  if (lstm_input != 1) throw std::invalid_argument("conv stack emits scalars: lstm_input must be 1");
  (void)feature_lengths();
}

std::vector<std::size_t> DnnConfig::feature_lengths() const {
  std::vector<std::size_t> out{input_len};
  for (std::size_t l = 0; l < conv_layers; ++l) {
    const std::size_t n = out.back();
    if (n < kernel) {
      throw std::invalid_argument("input of " + std::to_string(input_len) +
                                  " samples is too short for " + std::to_string(conv_layers) +
                                  " conv layers of kernel " + std::to_string(kernel));
    }
    out.push_back((n - kernel) / stride + 1);
  }
  return out;
}

ParamCount param_count(const DnnConfig& cfg) {
  cfg.validate();
  const std::size_t conv = cfg.conv_layers * (cfg.kernel * cfg.conv_channels + 1);
  const std::size_t lstm = kGates * cfg.lstm_hidden * (cfg.lstm_input + cfg.lstm_hidden + 1);
  return {lstm, conv + lstm};
}

ParamLayout::ParamLayout(const DnnConfig& cfg)
    : kernel_(cfg.kernel),
      hidden_(cfg.lstm_hidden),
      lstm_base_(cfg.conv_layers * (cfg.kernel + 1)),
      gate_w_(cfg.lstm_hidden * (cfg.lstm_input + cfg.lstm_hidden)) {}

DnnModel::DnnModel(DnnConfig cfg, std::vector<double> p)
    : config(std::move(cfg)), params(std::move(p)) {
  const std::size_t need = param_count(config).total;
  if (params.size() != need) {
    throw std::invalid_argument("model has " + std::to_string(params.size()) +
                                " parameters, config needs " + std::to_string(need));
  }
  for (double v : params) {
    if (!std::isfinite(v)) throw std::invalid_argument("model parameter is not finite");
  }
}

DnnModel DnnModel::zeros(const DnnConfig& cfg) {
  return DnnModel(cfg, std::vector<double>(param_count(cfg).total, 0.0));
}

Prediction forward(const DnnModel& model, const Trace& trace) {
  Network net(model);
  Workspace ws;
  net.run(trace, ws);
  return make_prediction(ws.probs);
}

std::vector<std::vector<double>> conv_features(const DnnModel& model, const Trace& trace) {
  Network net(model);
  Workspace ws;
  net.run(trace, ws);
  return ws.act;
}

double loss(const DnnModel& model, const Trace& trace, Label label) {
  return -std::log(forward(model, trace).probs[static_cast<int>(label)]);
}

GradientResult backward(const DnnModel& model, const Trace& trace, Label label) {
  Network net(model);
  Workspace ws;
  net.run(trace, ws);
  GradientResult out;
  out.grad.assign(model.params.size(), 0.0);
  out.loss = net.accumulate_grad(ws, label, out.grad, &out.logit_grad);
  out.prediction = make_prediction(ws.probs);
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(init_scale >= 0.0)) throw std::invalid_argument("init_scale must be non-negative");
  if (!std::isfinite(conv_bias_init)) throw std::invalid_argument("conv_bias_init must be finite");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("clip_norm must be non-negative");
}

DnnModel init_model(const DnnConfig& cfg, const TrainConfig& train_cfg) {
  cfg.validate_runnable();
  DnnModel model = DnnModel::zeros(cfg);
  if (train_cfg.init == InitKind::Zeros) return model;

  Rng rng = Rng(train_cfg.seed).split(0);
  const ParamLayout layout(cfg);
  auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
    const double a = train_cfg.init_scale / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t k = 0; k < count; ++k) {
      model.params[offset + k] = a * (2.0 * rng.uniform() - 1.0);
    }
  };
  for (std::size_t l = 0; l < cfg.conv_layers; ++l) {
    fill(layout.conv_weight(l), cfg.kernel, cfg.kernel);
    model.params[layout.conv_bias(l)] = train_cfg.conv_bias_init;
  }
  const std::size_t z = cfg.lstm_input + cfg.lstm_hidden;
  for (std::size_t q = 0; q < kGates; ++q) {
    fill(layout.lstm_weight(q), cfg.lstm_hidden * z, z);
  }
  return model;
}

TrainResult train(const LabeledDataset& train_set, const DnnConfig& dnn_cfg,
                  const TrainConfig& train_cfg) {
  train_cfg.validate();
  if (train_set.count(Label::Event) == 0 || train_set.count(Label::NoEvent) == 0) {
    throw std::invalid_argument("training set must contain both labels");
  }

  TrainResult result{init_model(dnn_cfg, train_cfg), {}};
  std::vector<double>& params = result.model.params;
  const std::size_t P = params.size();
  Network net(result.model);
  Workspace ws;
  Rng order_rng = Rng(train_cfg.seed).split(1);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(P), m(P, 0.0), v(P, 0.0);
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  std::size_t step = 0;
  std::vector<double> best_params = params;
  double best_loss = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + train_cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        net.run(train_set.traces[i], ws);
        epoch_loss += net.accumulate_grad(ws, train_set.labels[i], grad);
      }
      double scale = 1.0 / static_cast<double>(end - start);
      if (train_cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (double g : grad) sq += g * g;
        const double norm = std::sqrt(sq) * scale;
        if (norm > train_cfg.clip_norm) scale *= train_cfg.clip_norm / norm;
      }
      ++step;
      if (train_cfg.optimizer == OptimizerKind::Adam) {
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
        for (std::size_t k = 0; k < P; ++k) {
          const double g = grad[k] * scale;
          m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g;
          v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g * g;
          params[k] -= train_cfg.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + kEps);
        }
      } else {
        for (std::size_t k = 0; k < P; ++k) params[k] -= train_cfg.learning_rate * grad[k] * scale;
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss) ||
        !std::all_of(params.begin(), params.end(), [](double p) { return std::isfinite(p); })) {
      throw TrainingDiverged(epoch, "training diverged at epoch " + std::to_string(epoch));
    }
    result.loss_history.push_back(epoch_loss);
    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      best_params = params;
      result.best_epoch = epoch;
    }
  }
  params = std::move(best_params);
  return result;
}

std::vector<Label> predict_labels(const DnnModel& model, std::span<const Trace> traces) {
  Network net(model);
  Workspace ws;
  std::vector<Label> out;
  out.reserve(traces.size());
  for (const Trace& t : traces) {
    net.run(t, ws);
    out.push_back(make_prediction(ws.probs).label);
  }
  return out;
}

void save_model(std::ostream& os, const DnnModel& model) {
  const DnnConfig& c = model.config;
  os << kModelMagic << '\n'
     << "input_len " << c.input_len << '\n'
     << "conv_layers " << c.conv_layers << '\n'
     << "kernel " << c.kernel << '\n'
     << "stride " << c.stride << '\n'
     << "conv_channels " << c.conv_channels << '\n'
     << "conv_activation " << to_string(c.conv_activation) << '\n'
     << "lstm_hidden " << c.lstm_hidden << '\n'
     << "lstm_input " << c.lstm_input << '\n'
     << "params " << model.params.size() << '\n';
  for (double p : model.params) os << format_double(p) << '\n';
  os << "end\n";
}

DnnModel load_model(std::istream& is) {
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(is, line)) {
      throw std::runtime_error(std::string("model file ended while reading ") + what);
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  auto keyed = [&](std::string_view key) {
    const std::string l = next(std::string(key).c_str());
    const auto space = l.find(' ');
    if (space == std::string::npos || std::string_view(l).substr(0, space) != key) {
      throw std::runtime_error("model file: expected '" + std::string(key) + "', got '" + l + "'");
    }
    return l.substr(space + 1);
  };

  if (next("magic") != kModelMagic) throw std::runtime_error("not a spinread model file");
  DnnConfig c;
  c.input_len = checked_size(keyed("input_len"));
  c.conv_layers = checked_size(keyed("conv_layers"));
  c.kernel = checked_size(keyed("kernel"));
  c.stride = checked_size(keyed("stride"));
  c.conv_channels = checked_size(keyed("conv_channels"));
  c.conv_activation = activation_from_string(keyed("conv_activation"));
  c.lstm_hidden = checked_size(keyed("lstm_hidden"));
  c.lstm_input = checked_size(keyed("lstm_input"));
  const std::size_t declared = checked_size(keyed("params"));
  const std::size_t need = param_count(c).total;
  if (declared != need) {
    throw std::runtime_error("model file declares " + std::to_string(declared) +
                             " parameters, config needs " + std::to_string(need));
  }
  std::vector<double> params;
  params.reserve(need);
  while (true) {
    const std::string l = next("parameters");
    if (l == "end") break;
    params.push_back(parse_double(l));
  }
  if (params.size() != need) {
    throw std::runtime_error("model file holds " + std::to_string(params.size()) +
                             " parameters, expected " + std::to_string(need));
  }
  return DnnModel(c, std::move(params));
}

void save_model(const std::filesystem::path& path, const DnnModel& model) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_model(os, model);
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

DnnModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open model " + path.string());
  return load_model(is);
}

}  // namespace spinread
