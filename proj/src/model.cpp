// Copyright 2026 The relward Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "relward/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "relward/errors.hpp"
#include "relward/io.hpp"
#include "relward/parallel.hpp"
#include "relward/rng.hpp"

namespace relward {

namespace {

constexpr std::string_view kCheckpointMagic = "relward-checkpoint";
constexpr int kCheckpointVersion = 1;

template <class P, class Fn>
void visit_parameters(P& p, Fn&& fn) {
  auto dense = [&](const std::string& prefix, auto& d) {
    fn(prefix + ".weight", d.weight.values());
    fn(prefix + ".bias", d.bias.values());
  };
  fn("fb.mu", p.fb.mu);
  dense("acoustic_net.hidden", p.acoustic_net.hidden);
  dense("acoustic_net.output", p.acoustic_net.output);
  fn("mod.kernels", p.mod_kernels.kernels.values());
  fn("mod.bias", p.mod_kernels.bias.values());
  dense("mod_net.hidden", p.mod_net.hidden);
  dense("mod_net.output", p.mod_net.output);
  fn("bn.gamma", p.bn.gamma);
  fn("bn.beta", p.bn.beta);
  fn("head.conv.weight", p.head.conv_weight.values());
  fn("head.conv.bias", p.head.conv_bias.values());
  dense("head.fc1", p.head.fc1);
  dense("head.fc2", p.head.fc2);
  dense("head.out", p.head.out);
}

void add_into(GradientSet& total, const GradientSet& part) {
  std::vector<std::span<const double>> src;
  for_each_parameter(part, [&](const std::string&, std::span<const double> v) {
    src.push_back(v);
  });
  std::size_t idx = 0;
  for_each_parameter(total, [&](const std::string&, std::span<double> v) {
    const auto s = src[idx++];
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += s[i];
  });
}

std::string bool_string(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ArgumentError("config key '" + key + "': expected boolean, got '" + v + "'");
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ArgumentError("config key '" + key + "': expected non-negative integer, got '" +
                        v + "'");
  }
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::MFB: return "MFB";
    case Variant::MFB_R: return "MFB-R";
    case Variant::A: return "A";
    case Variant::A_R: return "A-R";
    case Variant::A_R_M_R: return "A-R,M-R";
    case Variant::Sinc: return "Sinc";
    case Variant::S_R_M_R: return "S-R,M-R";
  }
  return "unknown";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::MFB,  Variant::MFB_R,  Variant::A,
                                         Variant::A_R,  Variant::A_R_M_R, Variant::Sinc,
                                         Variant::S_R_M_R};
  return v;
}

Variant parse_variant(std::string_view name) {
  for (Variant v : all_variants()) {
    if (to_string(v) == name) return v;
  }
  throw ArgumentError("unknown variant '" + std::string(name) +
                      "' (expected MFB, MFB-R, A, A-R, A-R,M-R, Sinc, S-R,M-R)");
}

void apply_variant(ModelConfig& c, Variant v) {
  switch (v) {
    case Variant::MFB:
      c.family = KernelFamily::fixed_mel;
      c.acoustic_relevance = false;
      c.modulation_relevance = false;
      break;
    case Variant::MFB_R:
      c.family = KernelFamily::fixed_mel;
      c.acoustic_relevance = true;
      c.modulation_relevance = false;
      break;
    case Variant::A:
      c.family = KernelFamily::cosine_gaussian;
      c.acoustic_relevance = false;
      c.modulation_relevance = false;
      break;
    case Variant::A_R:
      c.family = KernelFamily::cosine_gaussian;
      c.acoustic_relevance = true;
      c.modulation_relevance = false;
      break;
    case Variant::A_R_M_R:
      c.family = KernelFamily::cosine_gaussian;
      c.acoustic_relevance = true;
      c.modulation_relevance = true;
      break;
    case Variant::Sinc:
      c.family = KernelFamily::sinc;
      c.acoustic_relevance = false;
      c.modulation_relevance = false;
      break;
    case Variant::S_R_M_R:
      c.family = KernelFamily::sinc;
      c.acoustic_relevance = true;
      c.modulation_relevance = true;
      break;
  }
}

Variant variant_of(const ModelConfig& c) {
  for (Variant v : all_variants()) {
    ModelConfig probe = c;
    apply_variant(probe, v);
    if (probe.family == c.family && probe.acoustic_relevance == c.acoustic_relevance &&
        probe.modulation_relevance == c.modulation_relevance) {
      return v;
    }
  }
  throw ArgumentError("family " + std::string(to_string(c.family)) +
                      " with acoustic_relevance=" + bool_string(c.acoustic_relevance) +
                      " modulation_relevance=" + bool_string(c.modulation_relevance) +
                      " is not a valid variant");
}

std::vector<std::pair<std::string, std::string>> config_entries(const ModelConfig& c) {
  auto n = [](std::size_t v) { return std::to_string(v); };
  return {
      {"filters", n(c.filters)},
      {"kernel_len", n(c.kernel_len)},
      {"frame_len", n(c.frame_len)},
      {"hop", n(c.hop)},
      {"frames", n(c.frames)},
      {"keep", n(c.keep)},
      {"mel_low_hz", format_double(c.mel_low_hz)},
      {"mel_high_hz", format_double(c.mel_high_hz)},
      {"family", std::string(to_string(c.family))},
      {"acoustic_relevance", bool_string(c.acoustic_relevance)},
      {"modulation_relevance", bool_string(c.modulation_relevance)},
      {"acoustic_hidden", n(c.acoustic_hidden)},
      {"modulation_hidden", n(c.modulation_hidden)},
      {"mod_filters", n(c.mod_filters)},
      {"mod_kf", n(c.mod_kf)},
      {"mod_kt", n(c.mod_kt)},
      {"norm_over_kept", bool_string(c.norm_over_kept)},
      {"head_maps", n(c.head_maps)},
      {"head_kernel", n(c.head_kernel)},
      {"head_pool", n(c.head_pool)},
      {"fc1", n(c.fc1)},
      {"fc2", n(c.fc2)},
      {"classes", n(c.classes)},
  };
}

bool is_model_config_key(const std::string& key) {
  for (const auto& [k, v] : config_entries(ModelConfig{})) {
    if (k == key) return true;
  }
  return false;
}

void set_config_value(ModelConfig& c, const std::string& key, const std::string& value) {
  if (key == "filters") c.filters = parse_count(key, value);
  else if (key == "kernel_len") c.kernel_len = parse_count(key, value);
  else if (key == "frame_len") c.frame_len = parse_count(key, value);
  else if (key == "hop") c.hop = parse_count(key, value);
  else if (key == "frames") c.frames = parse_count(key, value);
  else if (key == "keep") c.keep = parse_count(key, value);
  else if (key == "mel_low_hz") c.mel_low_hz = parse_double(value);
  else if (key == "mel_high_hz") c.mel_high_hz = parse_double(value);
  else if (key == "family") c.family = parse_kernel_family(value);
  else if (key == "acoustic_relevance") c.acoustic_relevance = parse_bool(key, value);
  else if (key == "modulation_relevance") c.modulation_relevance = parse_bool(key, value);
  else if (key == "acoustic_hidden") c.acoustic_hidden = parse_count(key, value);
  else if (key == "modulation_hidden") c.modulation_hidden = parse_count(key, value);
  else if (key == "mod_filters") c.mod_filters = parse_count(key, value);
  else if (key == "mod_kf") c.mod_kf = parse_count(key, value);
  else if (key == "mod_kt") c.mod_kt = parse_count(key, value);
  else if (key == "norm_over_kept") c.norm_over_kept = parse_bool(key, value);
  else if (key == "head_maps") c.head_maps = parse_count(key, value);
  else if (key == "head_kernel") c.head_kernel = parse_count(key, value);
  else if (key == "head_pool") c.head_pool = parse_count(key, value);
  else if (key == "fc1") c.fc1 = parse_count(key, value);
  else if (key == "fc2") c.fc2 = parse_count(key, value);
  else if (key == "classes") c.classes = parse_count(key, value);
  else throw ArgumentError("unknown model config key '" + key + "'");
}

StageShapes stage_shapes(const ModelConfig& c) {
  auto fail = [](const std::string& stage, const std::string& why) {
    throw ArgumentError("model config [" + stage + "]: " + why);
  };
  if (c.filters == 0) fail("acoustic", "filters must be positive");
  if (c.kernel_len % 2 == 0) fail("acoustic", "kernel_len must be odd");
  if (c.frame_len < c.kernel_len) fail("acoustic", "frame_len shorter than kernel_len");
  if (c.hop == 0) fail("acoustic", "hop must be positive");
  if (c.frames % 2 == 0) fail("acoustic", "frames must be odd");
  if (c.keep == 0 || c.keep % 2 == 0 || c.keep > c.frames) {
    fail("prune", "keep must be odd and <= frames");
  }
  if (c.keep < 2) fail("instance_norm", "need at least 2 frames");
  if (c.mod_filters == 0 || c.mod_kf % 2 == 0 || c.mod_kt % 2 == 0) {
    fail("modulation", "need mod_filters > 0 and odd mod_kf, mod_kt");
  }
  if (c.filters < c.mod_kf || c.keep < c.mod_kt) {
    fail("modulation", "kernel larger than the kept spectrogram");
  }
  StageShapes s{};
  s.mod_rows = c.filters - c.mod_kf + 1;
  s.mod_cols = c.keep - c.mod_kt + 1;
  if (s.mod_rows < kPoolWindowFrequency) fail("pool", "fewer than 3 rows to pool");
  s.pooled_rows = s.mod_rows / kPoolWindowFrequency;
  if (c.head_kernel % 2 == 0 || c.head_maps == 0 || c.head_pool == 0) {
    fail("head", "need odd head_kernel and positive head_maps, head_pool");
  }
  s.head_rows = s.pooled_rows / c.head_pool;
  s.head_cols = s.mod_cols / c.head_pool;
  if (s.head_rows == 0 || s.head_cols == 0) fail("head", "head pooling leaves no output");
  s.flat = c.head_maps * s.head_rows * s.head_cols;
  if (c.fc1 == 0 || c.fc2 == 0 || c.classes < 2) {
    fail("head", "need positive fc sizes and at least 2 classes");
  }
  return s;
}

AcousticModel make_model(const ModelConfig& config, std::uint64_t seed,
                         const InitOptions& options) {
  const StageShapes shapes = stage_shapes(config);
  Rng rng = make_rng(seed, "init");
  AcousticModel m;
  m.config = config;
  ModelParams& p = m.params;
  p.fb = init_mel(config.filters, config.mel_low_hz, config.mel_high_hz, kSampleRate,
                  config.family, config.kernel_len);
  p.acoustic_net = make_relevance_net(config.filters, config.acoustic_hidden,
                                      RelevancePooling::time_average, rng,
                                      options.zero_relevance_output);
  p.mod_kernels = make_modulation_kernels(config.mod_filters, config.mod_kf,
                                          config.mod_kt, rng);
  p.mod_net = make_relevance_net(config.mod_filters, config.modulation_hidden,
                                 RelevancePooling::global_average, rng,
                                 options.zero_relevance_output);
  p.bn = make_batch_norm(config.mod_filters);
  const std::size_t kh = config.head_kernel;
  p.head.conv_weight = Tensor({config.head_maps, config.mod_filters, kh, kh});
  xavier_fill(p.head.conv_weight, config.mod_filters * kh * kh, config.head_maps * kh * kh,
              rng);
  p.head.conv_bias = Tensor({config.head_maps});
  p.head.fc1 = make_dense(shapes.flat, config.fc1, rng);
  p.head.fc2 = make_dense(config.fc1, config.fc2, rng);
  p.head.out = make_dense(config.fc2, config.classes, rng);
  return m;
}

void for_each_parameter(ModelParams& params,
                        const std::function<void(const std::string&, std::span<double>)>& fn) {
  visit_parameters(params, [&](const std::string& name, std::vector<double>& v) {
    fn(name, std::span<double>(v));
  });
}

void for_each_parameter(
    const ModelParams& params,
    const std::function<void(const std::string&, std::span<const double>)>& fn) {
  visit_parameters(params, [&](const std::string& name, const std::vector<double>& v) {
    fn(name, std::span<const double>(v));
  });
}

std::vector<std::string> parameter_names(const AcousticModel& model) {
  std::vector<std::string> names;
  for_each_parameter(model.params, [&](const std::string& n, std::span<const double>) {
    names.push_back(n);
  });
  return names;
}

GradientSet zero_gradients(const AcousticModel& model) {
  GradientSet g = model.params;
  for_each_parameter(g, [](const std::string&, std::span<double> v) {
    std::fill(v.begin(), v.end(), 0.0);
  });
  std::fill(g.bn.running_mean.begin(), g.bn.running_mean.end(), 0.0);
  std::fill(g.bn.running_var.begin(), g.bn.running_var.end(), 0.0);
  return g;
}

namespace {

void scale_inplace(Tensor& t, double s) {
  if (s == 1.0) return;
  for (double& v : t.values()) v *= s;
}

void forward_front(const AcousticModel& model, const RawFrameBlock& block,
                   const KernelBank& bank, const ForwardOptions& options,
                   SampleCache& s) {
  const ModelConfig& cfg = model.config;
  const ModelParams& p = model.params;

  s.x = acoustic_forward(block, bank, &s.acoustic);
  scale_inplace(s.x.values, options.acoustic_prescale);

  Spectrogram y;
  if (cfg.acoustic_relevance) {
    RelevanceWeights w = acoustic_relevance(s.x, p.acoustic_net, &s.acoustic_rel);
    y = apply_acoustic_weights(s.x, w);
    s.w_a = std::move(w.w);
  } else {
    y = Spectrogram{s.x.values, SpectrogramStage::y_weighted};
    s.w_a.clear();
  }

  if (cfg.norm_over_kept) {
    s.z_kept = instance_norm(prune_center(y, cfg.keep), kNormStabilizer, &s.inorm);
  } else {
    s.z_kept = prune_center(instance_norm(y, kNormStabilizer, &s.inorm), cfg.keep);
  }

  const FeatureMaps conv = modulation_forward(s.z_kept, p.mod_kernels, &s.modulation);
  s.pooled = max_pool_3x1(conv);
  FeatureMaps mod_in = s.pooled.maps;
  scale_inplace(mod_in.maps, options.modulation_prescale);

  if (cfg.modulation_relevance) {
    RelevanceWeights w = modulation_relevance(mod_in, p.mod_net, &s.mod_rel);
    s.q = apply_modulation_weights(mod_in, w).maps;
    s.w_m = std::move(w.w);
  } else {
    s.q = mod_in.maps;
    s.w_m.clear();
  }
}

std::vector<double> forward_head(const AcousticModel& model, SampleCache& s) {
  const ModelConfig& cfg = model.config;
  const ClassifierHead& h = model.params.head;
  const std::size_t pad = (cfg.head_kernel - 1) / 2;
  s.head_pre = conv2d_forward(s.bn_out, h.conv_weight, h.conv_bias, pad, pad);
  Tensor act = s.head_pre;
  relu_inplace(act.flat());
  s.head_pool = max_pool2d(act, cfg.head_pool, cfg.head_pool);
  s.flat = s.head_pool.out.values();
  s.fc1_pre = dense_forward(h.fc1, s.flat);
  s.fc1_act = s.fc1_pre;
  relu_inplace(s.fc1_act);
  s.fc2_pre = dense_forward(h.fc2, s.fc1_act);
  s.fc2_act = s.fc2_pre;
  relu_inplace(s.fc2_act);
  return dense_forward(h.out, s.fc2_act);
}

void check_block(const ModelConfig& cfg, const RawFrameBlock& block) {
  if (block.frames.rank() != 2 || block.frames.dim(0) != cfg.frames ||
      block.frames.dim(1) != cfg.frame_len || block.frame_len != cfg.frame_len) {
    throw ContractError("forward [frames]: block " + block.frames.shape_string() +
                        " does not match configured " + std::to_string(cfg.frames) + "x" +
                        std::to_string(cfg.frame_len));
  }
}

}  // namespace

ForwardResult forward(const AcousticModel& model,
                      const std::vector<const RawFrameBlock*>& batch, BatchNormMode mode,
                      const ForwardOptions& options) {
  if (batch.empty()) throw ArgumentError("forward: empty batch");
  stage_shapes(model.config);
  for (const RawFrameBlock* b : batch) check_block(model.config, *b);
  if (model.params.fb.filter_count() != model.config.filters) {
    throw ContractError("forward [acoustic]: filterbank size does not match config");
  }

  ForwardResult r;
  ForwardCache& cache = r.cache;
  cache.mode = mode;
  cache.options = options;
  cache.bank = synthesize_kernels(model.params.fb);
  cache.samples.resize(batch.size());
  parallel_for(batch.size(), [&](std::size_t b) {
    forward_front(model, *batch[b], cache.bank, options, cache.samples[b]);
  });

  std::vector<const Tensor*> qs;
  qs.reserve(batch.size());
  for (const auto& s : cache.samples) qs.push_back(&s.q);
  std::vector<Tensor> normalized = batch_norm_forward(qs, model.params.bn, mode, &cache.bn);

  r.logits.resize(batch.size());
  parallel_for(batch.size(), [&](std::size_t b) {
    cache.samples[b].bn_out = std::move(normalized[b]);
    r.logits[b] = forward_head(model, cache.samples[b]);
  });
  return r;
}

std::vector<double> forward(const AcousticModel& model, const RawFrameBlock& block) {
  return forward(model, {&block}, BatchNormMode::eval).logits.front();
}

namespace {

Tensor backward_head(const AcousticModel& model, const SampleCache& s,
                     std::span<const double> d_logits, GradientSet& g) {
  const ModelConfig& cfg = model.config;
  const ClassifierHead& h = model.params.head;
  std::vector<double> d = dense_backward(h.out, s.fc2_act, d_logits, &g.head.out);
  relu_backward_inplace(s.fc2_pre, d);
  d = dense_backward(h.fc2, s.fc1_act, d, &g.head.fc2);
  relu_backward_inplace(s.fc1_pre, d);
  d = dense_backward(h.fc1, s.flat, d, &g.head.fc1);
  Tensor d_pool(s.head_pool.out.shape());
  d_pool.values() = std::move(d);
  Tensor d_pre = max_pool2d_backward(s.head_pre.shape(), s.head_pool.argmax, d_pool);
  relu_backward_inplace(s.head_pre.flat(), d_pre.flat());
  const std::size_t pad = (cfg.head_kernel - 1) / 2;
  Tensor d_in;
  conv2d_backward(s.bn_out, h.conv_weight, d_pre, pad, pad, &d_in, &g.head.conv_weight,
                  &g.head.conv_bias);
  return d_in;
}

void backward_front(const AcousticModel& model, const RawFrameBlock& block,
                    const ForwardCache& cache, const SampleCache& s, const Tensor& d_q,
                    GradientSet& g, Tensor* d_frames) {
  const ModelConfig& cfg = model.config;
  const ModelParams& p = model.params;

  Tensor d_mod_in = d_q;
  if (cfg.modulation_relevance) {
    const std::size_t maps = d_q.dim(0);
    const std::size_t per = d_q.size() / maps;
    std::vector<double> d_w(maps, 0.0);
    const Tensor& mod_in_pooled = s.pooled.maps.maps;
    const double pre = cache.options.modulation_prescale;
    for (std::size_t c = 0; c < maps; ++c) {
      const double* in = mod_in_pooled.row(c);
      const double* dq = d_q.row(c);
      double* dm = d_mod_in.row(c);
      double acc = 0.0;
      for (std::size_t j = 0; j < per; ++j) {
        acc += in[j] * pre * dq[j];
        dm[j] = s.w_m[c] * dq[j];
      }
      d_w[c] = acc;
    }
    const std::vector<double> d_pooled =
        relevance_backward(p.mod_net, s.mod_rel, d_w, &g.mod_net);
    add_pooling_backward(d_pooled, d_mod_in);
  }
  scale_inplace(d_mod_in, cache.options.modulation_prescale);

  const Tensor d_conv = max_pool_3x1_backward(s.pooled, d_mod_in);
  Tensor d_z_kept;
  modulation_backward(s.z_kept, p.mod_kernels, s.modulation, d_conv, &g.mod_kernels,
                      &d_z_kept);

  Tensor d_y;
  if (cfg.norm_over_kept) {
    d_y = prune_center_backward(instance_norm_backward(s.inorm, d_z_kept), cfg.frames);
  } else {
    d_y = instance_norm_backward(s.inorm, prune_center_backward(d_z_kept, cfg.frames));
  }

  Tensor d_x = d_y;
  if (cfg.acoustic_relevance) {
    const std::size_t f = d_y.dim(0);
    const std::size_t t = d_y.dim(1);
    std::vector<double> d_w(f, 0.0);
    for (std::size_t i = 0; i < f; ++i) {
      const double* x = s.x.values.row(i);
      const double* dy = d_y.row(i);
      double* dx = d_x.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < t; ++j) {
        acc += x[j] * dy[j];
        dx[j] = s.w_a[i] * dy[j];
      }
      d_w[i] = acc;
    }
    const std::vector<double> d_pooled =
        relevance_backward(p.acoustic_net, s.acoustic_rel, d_w, &g.acoustic_net);
    add_pooling_backward(d_pooled, d_x);
  }
  scale_inplace(d_x, cache.options.acoustic_prescale);

  const bool learn_mu = p.fb.learnable();
  if (!learn_mu && !d_frames) return;
  Tensor d_taps;
  acoustic_backward(block, cache.bank, s.acoustic, d_x, learn_mu ? &d_taps : nullptr,
                    d_frames);
  if (learn_mu) {
    const std::vector<double> d_mu = mu_gradient(p.fb, d_taps);
    for (std::size_t i = 0; i < d_mu.size(); ++i) g.fb.mu[i] += d_mu[i];
  }
}

}  // namespace

GradientSet backward(const AcousticModel& model,
                     const std::vector<const RawFrameBlock*>& batch,
                     const ForwardCache& cache,
                     const std::vector<std::vector<double>>& d_logits,
                     std::vector<Tensor>* d_frames) {
  const std::size_t n = batch.size();
  if (cache.samples.size() != n || d_logits.size() != n || cache.bank.taps.empty()) {
    throw ContractError("backward: missing forward cache for this batch");
  }
  GradientSet total = zero_gradients(model);

  // Per-sample partial gradients are summed in sample order, so the result
  // does not depend on the worker count.
  std::vector<GradientSet> parts(n);
  std::vector<Tensor> d_bn_out(n);
  parallel_for(n, [&](std::size_t b) {
    parts[b] = zero_gradients(model);
    d_bn_out[b] = backward_head(model, cache.samples[b], d_logits[b], parts[b]);
  });
  for (const auto& part : parts) add_into(total, part);

  const std::vector<Tensor> d_q = batch_norm_backward(model.params.bn, cache.bn, d_bn_out,
                                                      &total.bn.gamma, &total.bn.beta);

  if (d_frames) d_frames->assign(n, Tensor{});
  parallel_for(n, [&](std::size_t b) {
    parts[b] = zero_gradients(model);
    backward_front(model, *batch[b], cache, cache.samples[b], d_q[b], parts[b],
                   d_frames ? &(*d_frames)[b] : nullptr);
  });
  for (const auto& part : parts) add_into(total, part);
  return total;
}

double cross_entropy(std::span<const double> logits, int class_id) {
  if (logits.size() < 2) throw ArgumentError("cross_entropy: need at least 2 classes");
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= logits.size()) {
    throw ArgumentError("cross_entropy: class " + std::to_string(class_id) +
                        " outside [0, " + std::to_string(logits.size()) + ")");
  }
  const auto top_it = std::max_element(logits.begin(), logits.end());
  const double top = *top_it;
  const auto top_idx = static_cast<std::size_t>(top_it - logits.begin());
  double rest = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j != top_idx) rest += std::exp(logits[j] - top);
  }
  return (top - logits[static_cast<std::size_t>(class_id)]) + std::log1p(rest);
}

std::vector<double> cross_entropy_gradient(std::span<const double> logits, int class_id) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= logits.size()) {
    throw ArgumentError("cross_entropy: class " + std::to_string(class_id) +
                        " outside [0, " + std::to_string(logits.size()) + ")");
  }
  std::vector<double> d = softmax(logits);
  d[static_cast<std::size_t>(class_id)] -= 1.0;
  return d;
}

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

LossResult loss_and_gradients(const AcousticModel& model,
                              const std::vector<const RawFrameBlock*>& batch,
                              const std::vector<int>& labels, BatchNormMode mode) {
  if (labels.size() != batch.size()) throw ArgumentError("loss: label count mismatch");
  ForwardResult fr = forward(model, batch, mode);
  LossResult r;
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<std::vector<double>> d_logits(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    r.loss += cross_entropy(fr.logits[b], labels[b]);
    if (argmax(fr.logits[b]) == static_cast<std::size_t>(labels[b])) ++r.correct;
    d_logits[b] = cross_entropy_gradient(fr.logits[b], labels[b]);
    for (double& d : d_logits[b]) d *= inv;
  }
  r.loss *= inv;
  r.grads = backward(model, batch, fr.cache, d_logits);
  r.cache = std::move(fr.cache);
  return r;
}

double batch_loss(const AcousticModel& model,
                  const std::vector<const RawFrameBlock*>& batch,
                  const std::vector<int>& labels, BatchNormMode mode) {
  const ForwardResult fr = forward(model, batch, mode);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) loss += cross_entropy(fr.logits[b], labels[b]);
  return loss / static_cast<double>(batch.size());
}

GradientSet backward(const AcousticModel& model, const RawFrameBlock& block, int class_id) {
  return loss_and_gradients(model, {&block}, {class_id}, BatchNormMode::eval).grads;
}

std::string serialize_checkpoint(const AcousticModel& model, std::uint64_t step) {
  std::string out;
  out += std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion) + "\n";
  out += "step " + std::to_string(step) + "\n";
  for (const auto& [k, v] : config_entries(model.config)) out += "config " + k + " " + v + "\n";
  auto put = [&](const std::string& name, std::span<const double> values) {
    out += "tensor " + name + " " + std::to_string(values.size());
    for (double v : values) {
      out += ' ';
      out += format_double(v);
    }
    out += '\n';
  };
  for_each_parameter(model.params, put);
  put("fb.bandwidth", model.params.fb.bandwidth);
  put("bn.running_mean", model.params.bn.running_mean);
  put("bn.running_var", model.params.bn.running_var);
  out += "scalar bn.momentum " + format_double(model.params.bn.momentum) + "\n";
  out += "scalar bn.eps " + format_double(model.params.bn.eps) + "\n";
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const AcousticModel& model,
                     std::uint64_t step) {
  write_file_atomic(path, serialize_checkpoint(model, step));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  const std::string where = path.string() + ": ";
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic) {
    throw FormatError(where + "not a relward checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw FormatError(where + "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ModelConfig config;
  std::map<std::string, std::vector<double>> tensors;
  std::map<std::string, double> scalars;
  std::string kind;
  while (in >> kind) {
    if (kind == "step") {
      in >> ck.step;
    } else if (kind == "config") {
      std::string key, value;
      in >> key >> value;
      set_config_value(config, key, value);
    } else if (kind == "tensor") {
      std::string name;
      std::size_t n = 0;
      in >> name >> n;
      std::vector<double> values(n);
      std::string tok;
      for (std::size_t i = 0; i < n; ++i) {
        if (!(in >> tok)) throw FormatError(where + "truncated tensor " + name);
        values[i] = parse_double(tok);
      }
      tensors[name] = std::move(values);
    } else if (kind == "scalar") {
      std::string name, tok;
      in >> name >> tok;
      scalars[name] = parse_double(tok);
    } else {
      throw FormatError(where + "unexpected record '" + kind + "'");
    }
    if (!in) throw FormatError(where + "truncated record '" + kind + "'");
  }

  ck.model = make_model(config, 0);
  auto take = [&](const std::string& name, std::span<double> dst) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError(where + "missing tensor " + name);
    if (it->second.size() != dst.size()) {
      throw FormatError(where + "tensor " + name + " has " +
                        std::to_string(it->second.size()) + " values, expected " +
                        std::to_string(dst.size()));
    }
    std::copy(it->second.begin(), it->second.end(), dst.begin());
  };
  ModelParams& p = ck.model.params;
  for_each_parameter(p, take);
  take("fb.bandwidth", p.fb.bandwidth);
  take("bn.running_mean", p.bn.running_mean);
  take("bn.running_var", p.bn.running_var);
  if (scalars.count("bn.momentum")) p.bn.momentum = scalars["bn.momentum"];
  if (scalars.count("bn.eps")) p.bn.eps = scalars["bn.eps"];
  validate(p.fb);
  return ck;
}

void import_filters(AcousticModel& model, const FilterFile& filters) {
  FilterbankParams& fb = model.params.fb;
  if (filters.mu.size() != fb.filter_count() || filters.kernel_len != fb.kernel_len) {
    throw ContractError("import_filters: file has f=" + std::to_string(filters.mu.size()) +
                        " k=" + std::to_string(filters.kernel_len) + ", model has f=" +
                        std::to_string(fb.filter_count()) +
                        " k=" + std::to_string(fb.kernel_len));
  }
  FilterbankParams candidate = fb;
  candidate.mu = filters.mu;
  validate(candidate);
  fb.mu = filters.mu;
}

}  // namespace relward
