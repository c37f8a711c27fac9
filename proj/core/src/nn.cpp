#include "joinrl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace joinrl {

Mlp::Mlp(std::vector<std::size_t> sizes, std::uint64_t seed) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw config_error("mlp: need at least input and output sizes");
  for (const std::size_t s : sizes_) {
    if (s == 0) throw config_error("mlp: zero-sized layer");
  }
  Rng rng(mix_seed(seed, 0x6d6c70));
  layers_.resize(sizes_.size() - 1);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t fan_in = sizes_[l];
    const std::size_t fan_out = sizes_[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    layers_[l].w.resize(fan_out * fan_in);
    layers_[l].b.assign(fan_out, 0.0);
    for (auto& w : layers_[l].w) w = rng.uniform(-bound, bound);
  }
}

std::vector<double> Mlp::forward(std::span<const double> input) const {
  if (input.size() != input_size()) {
    throw runtime_error("mlp forward: input size " + std::to_string(input.size()) +
                        " != " + std::to_string(input_size()));
  }
  for (const double v : input) {
    if (!std::isfinite(v)) throw runtime_error("mlp forward: non-finite input");
  }
  std::vector<double> cur(input.begin(), input.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    next.assign(out, 0.0);
    const double* w = layers_[l].w.data();
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w + o * in;
      double acc = layers_[l].b[o];
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * cur[i];
      next[o] = acc;
    }
    if (l + 1 < layers_.size()) {
      for (auto& v : next) v = v > 0.0 ? v : 0.0;
    }
    cur.swap(next);
  }
  return cur;
}

Mlp::Trace Mlp::forward_trace(std::span<const double> input) const {
  if (input.size() != input_size()) {
    throw runtime_error("mlp forward: input size mismatch");
  }
  Trace trace;
  trace.input.assign(input.begin(), input.end());
  trace.pre.resize(layers_.size());
  trace.act.resize(layers_.size());
  const std::vector<double>* cur = &trace.input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    auto& pre = trace.pre[l];
    pre.assign(out, 0.0);
    const double* w = layers_[l].w.data();
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w + o * in;
      double acc = layers_[l].b[o];
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * (*cur)[i];
      pre[o] = acc;
    }
    auto& act = trace.act[l];
    act = pre;
    if (l + 1 < layers_.size()) {
      for (auto& v : act) v = v > 0.0 ? v : 0.0;
    }
    cur = &act;
  }
  return trace;
}

void Mlp::backward(const Trace& trace, std::span<const double> output_grad,
                   std::vector<ParamBlock>& grads) const {
  if (output_grad.size() != output_size()) {
    throw runtime_error("mlp backward: output gradient size mismatch");
  }
  if (grads.size() != layers_.size()) {
    throw runtime_error("mlp backward: gradient block count mismatch");
  }
  std::vector<double> dpre(output_grad.begin(), output_grad.end());
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const std::size_t in = sizes_[li];
    const std::size_t out = sizes_[li + 1];
    const std::vector<double>& below = li == 0 ? trace.input : trace.act[li - 1];
    double* dw = grads[li].w.data();
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dpre[o];
      grads[li].b[o] += g;
      double* drow = dw + o * in;
      for (std::size_t i = 0; i < in; ++i) drow[i] += g * below[i];
    }
    if (li == 0) break;
    std::vector<double> dact(in, 0.0);
    const double* w = layers_[li].w.data();
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dpre[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) dact[i] += g * row[i];
    }
    // ReLU gate of the layer below.
    for (std::size_t i = 0; i < in; ++i) {
      dact[i] = trace.pre[li - 1][i] > 0.0 ? dact[i] : 0.0;
    }
    dpre.swap(dact);
  }
}

std::vector<ParamBlock> Mlp::zero_grads() const {
  std::vector<ParamBlock> grads(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    grads[l].w.assign(layers_[l].w.size(), 0.0);
    grads[l].b.assign(layers_[l].b.size(), 0.0);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(const Mlp& net, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  m_ = net.zero_grads();
  v_ = net.zero_grads();
}

void Adam::step(Mlp& net, const std::vector<ParamBlock>& grads) {
  if (grads.size() != m_.size()) throw runtime_error("adam: gradient shape mismatch");
  for (const auto& g : grads) {
    for (const double v : g.w) {
      if (!std::isfinite(v)) throw runtime_error("adam: non-finite gradient");
    }
    for (const double v : g.b) {
      if (!std::isfinite(v)) throw runtime_error("adam: non-finite gradient");
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](std::vector<double>& p, std::vector<double>& m, std::vector<double>& v,
                    const std::vector<double>& g) {
    if (g.size() != p.size()) throw runtime_error("adam: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  };
  for (std::size_t l = 0; l < m_.size(); ++l) {
    update(net.layers()[l].w, m_[l].w, v_[l].w, grads[l].w);
    update(net.layers()[l].b, m_[l].b, v_[l].b, grads[l].b);
  }
}

// ---------------------------------------------------------------------------
// Masking
// ---------------------------------------------------------------------------

MaskedOutput apply_mask(std::span<const double> raw, const ActionMask& mask, MaskMode mode) {
  if (raw.size() != mask.size()) throw runtime_error("apply_mask: length mismatch");
  if (std::find(mask.begin(), mask.end(), std::uint8_t{1}) == mask.end()) {
    throw runtime_error("apply_mask: no valid action");
  }
  MaskedOutput out;
  out.raw.assign(raw.begin(), raw.end());
  out.mask = mask;
  out.masked = out.raw;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) out.masked[i] = mode == MaskMode::Sentinel ? kMaskSentinel : 0.0;
  }
  return out;
}

std::size_t masked_argmax(std::span<const double> values, const ActionMask& mask) {
  if (values.size() != mask.size()) throw runtime_error("masked_argmax: length mismatch");
  std::size_t best = mask.size();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    if (best == mask.size() || values[i] > values[best]) best = i;
  }
  if (best == mask.size()) throw runtime_error("masked_argmax: no valid action");
  return best;
}

std::vector<double> masked_softmax(std::span<const double> logits, const ActionMask& mask) {
  if (logits.size() != mask.size()) throw runtime_error("masked_softmax: length mismatch");
  double max_valid = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) max_valid = std::max(max_valid, logits[i]);
  }
  if (!std::isfinite(max_valid)) throw runtime_error("masked_softmax: no valid action");
  std::vector<double> probs(logits.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    probs[i] = std::exp(logits[i] - max_valid);
    sum += probs[i];
  }
  for (auto& p : probs) p /= sum;
  return probs;
}

// ---------------------------------------------------------------------------
// Weight files
// ---------------------------------------------------------------------------

namespace {

constexpr char kWeightMagic[4] = {'J', 'R', 'L', 'W'};
constexpr std::uint32_t kWeightVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(std::span<const std::uint8_t>& in, const char* what) {
  if (in.size() < sizeof(T)) throw config_error(std::string("weight file: truncated ") + what);
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in = in.subspan(sizeof(T));
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_weights(const Mlp& net) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kWeightMagic, kWeightMagic + 4);
  put(out, kWeightVersion);
  put(out, static_cast<std::uint32_t>(net.sizes().size()));
  for (const std::size_t s : net.sizes()) put(out, static_cast<std::uint64_t>(s));
  for (const auto& layer : net.layers()) {
    for (const double v : layer.w) put(out, v);
    for (const double v : layer.b) put(out, v);
  }
  return out;
}

Mlp deserialize_weights(std::span<const std::uint8_t> bytes) {
  std::span<const std::uint8_t> in = bytes;
  if (in.size() < 4 || std::memcmp(in.data(), kWeightMagic, 4) != 0) {
    throw config_error("weight file: bad magic");
  }
  in = in.subspan(4);
  const auto version = take<std::uint32_t>(in, "version");
  if (version != kWeightVersion) {
    throw config_error("weight file: unsupported version " + std::to_string(version));
  }
  const auto nsizes = take<std::uint32_t>(in, "layer count");
  if (nsizes < 2 || nsizes > 64) throw config_error("weight file: implausible layer count");
  std::vector<std::size_t> sizes(nsizes);
  for (auto& s : sizes) s = static_cast<std::size_t>(take<std::uint64_t>(in, "layer size"));

  Mlp net(sizes, 0);
  for (auto& layer : net.layers()) {
    for (auto& v : layer.w) v = take<double>(in, "weights");
    for (auto& v : layer.b) v = take<double>(in, "biases");
  }
  if (!in.empty()) throw config_error("weight file: trailing bytes");
  return net;
}

void save_weights(const Mlp& net, const std::filesystem::path& path) {
  const auto bytes = serialize_weights(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw runtime_error("write failed for '" + path.string() + "'");
}

Mlp load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open weight file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_weights(bytes);
}

}  // namespace joinrl
