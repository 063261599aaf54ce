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

#include "relward/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "relward/errors.hpp"
#include "relward/io.hpp"
#include "relward/rng.hpp"

namespace relward {

ModelConfig tiny_config() {
  ModelConfig c;
  c.filters = 8;
  c.kernel_len = 17;
  c.frames = 11;
  c.keep = 5;
  c.acoustic_hidden = 6;
  c.modulation_hidden = 3;
  c.mod_filters = 4;
  c.mod_kf = 3;
  c.mod_kt = 3;
  c.head_maps = 4;
  c.head_kernel = 3;
  c.head_pool = 2;
  c.fc1 = 12;
  c.fc2 = 10;
  c.classes = 3;
  return c;
}

ModelConfig desk_config() {
  ModelConfig c;
  c.filters = 32;
  c.kernel_len = 65;
  c.frames = 31;
  c.keep = 21;
  c.acoustic_hidden = 32;
  c.modulation_hidden = 8;
  c.mod_filters = 16;
  c.fc1 = 128;
  c.fc2 = 64;
  return c;
}

ModelConfig preset_config(const std::string& name) {
  if (name == "full") return ModelConfig{};
  if (name == "desk") return desk_config();
  if (name == "tiny") return tiny_config();
  throw ArgumentError("unknown preset '" + name + "' (expected full, desk or tiny)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ArgumentError("--" + key + ": expected non-negative integer, got '" + v + "'");
  }
}

NoiseKind parse_noise(const std::string& v) {
  if (v == "white") return NoiseKind::white;
  if (v == "pink") return NoiseKind::pink;
  throw ArgumentError("--noise: expected white or pink, got '" + v + "'");
}

std::string noise_name(NoiseKind k) { return k == NoiseKind::white ? "white" : "pink"; }

}  // namespace

std::string format_snr_list(const std::vector<double>& snrs) {
  std::string out;
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    if (i) out += ',';
    out += format_snr(snrs[i]);
  }
  return out;
}

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ArgumentError("--snr: empty entry in '" + text + "'");
    try {
      out.push_back(parse_snr(item));
    } catch (const Error&) {
      throw ArgumentError("--snr: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw ArgumentError("--snr: no values given");
  return out;
}

std::vector<std::pair<std::string, std::string>> train_config_entries(const TrainConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv = {
      {"preset", c.preset},
      {"variant", std::string(to_string(variant_of(c.model)))},
      {"batch", std::to_string(c.batch)},
      {"epochs", std::to_string(c.epochs)},
      {"seed", std::to_string(c.seed)},
      {"lr", format_double(c.lr)},
      {"data", c.data.string()},
      {"eval_data", c.eval_data.string()},
      {"freeze_filters", c.freeze_filters ? "true" : "false"},
      {"snr", format_snr_list(c.eval_snrs)},
      {"noise", noise_name(c.noise)},
  };
  for (auto& e : config_entries(c.model)) kv.push_back(std::move(e));
  return kv;
}

void set_train_value(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "preset") {
    c.model = preset_config(value);
    c.preset = value;
  } else if (key == "variant") {
    apply_variant(c.model, parse_variant(value));
  } else if (key == "batch") {
    c.batch = parse_size(key, value);
  } else if (key == "epochs") {
    c.epochs = parse_size(key, value);
  } else if (key == "seed") {
    c.seed = parse_size(key, value);
  } else if (key == "lr") {
    const double lr = parse_double(value);
    if (!(lr > 0.0)) throw ArgumentError("--lr: must be positive");
    c.lr = lr;
  } else if (key == "data") {
    c.data = value;
  } else if (key == "eval_data") {
    c.eval_data = value;
  } else if (key == "freeze_filters") {
    if (value != "true" && value != "false") {
      throw ArgumentError("freeze_filters: expected true or false, got '" + value + "'");
    }
    c.freeze_filters = value == "true";
  } else if (key == "snr") {
    c.eval_snrs = parse_snr_list(value);
  } else if (key == "noise") {
    c.noise = parse_noise(value);
  } else if (is_model_config_key(key)) {
    set_config_value(c.model, key, value);
  } else {
    throw ArgumentError("unknown config key '" + key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected key=value");
    }
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

void apply_config(TrainConfig& c, const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "preset") set_train_value(c, k, v);
  }
  for (const auto& [k, v] : kv) {
    if (k == "variant") set_train_value(c, k, v);
  }
  for (const auto& [k, v] : kv) {
    if (k != "preset" && k != "variant") set_train_value(c, k, v);
  }
}

std::vector<LabeledClip> synthesize_dataset(const SynthConfig& config) {
  if (config.classes < 1 ||
      static_cast<std::size_t>(config.classes) > formant_table(config.table_id).size()) {
    throw ArgumentError("--classes: must be in [1, " +
                        std::to_string(formant_table(config.table_id).size()) + "]");
  }
  if (config.snrs.empty()) throw ArgumentError("--snr: no values given");
  const std::uint64_t data_seed = derive_seed(config.seed, "data");
  const std::uint64_t noise_seed = derive_seed(config.seed, "data-noise");
  const auto classes = static_cast<std::size_t>(config.classes);
  std::vector<LabeledClip> clips;
  clips.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) {
    ClipSpec spec;
    spec.class_id = static_cast<int>(i % classes);
    spec.seed = derive_seed(data_seed, std::to_string(i));
    spec.table_id = config.table_id;
    LabeledClip clip = synthesize_clip(spec);
    const double snr = config.snrs[(i / classes) % config.snrs.size()];
    if (!(std::isinf(snr) && snr > 0)) {
      const SampleBuffer n = make_noise(config.noise, clip.buffer.samples.size(),
                                        derive_seed(noise_seed, std::to_string(i)));
      clip.buffer = mix_noise(clip.buffer, n, snr);
      clip.snr_db = snr;
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

std::filesystem::path write_dataset(const std::filesystem::path& dir,
                                    const std::vector<LabeledClip>& clips) {
  std::filesystem::create_directories(dir / "clips");
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%05zu.wav", i);
    const std::filesystem::path rel = std::filesystem::path("clips") / name;
    write_wav(dir / rel, clips[i].buffer);
    entries.push_back({rel, clips[i].class_id, clips[i].snr_db.value_or(kCleanSnr)});
  }
  const std::filesystem::path manifest = dir / "manifest.tsv";
  write_manifest(manifest, entries);
  return manifest;
}

RawFrameBlock center_block(const SampleBuffer& buffer, const ModelConfig& config) {
  return frame_signal(buffer, config.frame_len, config.hop, config.frames,
                      static_cast<std::int64_t>(buffer.samples.size() / 2));
}

namespace {

SampleBuffer noisy_copy(const SampleBuffer& clean, double snr_db, NoiseKind noise,
                        std::uint64_t noise_seed, std::size_t index) {
  if (std::isinf(snr_db) && snr_db > 0) return clean;
  const SampleBuffer n = make_noise(noise, clean.samples.size(),
                                    derive_seed(noise_seed, "clip/" + std::to_string(index)));
  return mix_noise(clean, n, snr_db);
}

}  // namespace

Dataset make_dataset(const std::vector<LabeledClip>& clips, const ModelConfig& config,
                     double snr_db, NoiseKind noise, std::uint64_t noise_seed) {
  Dataset d;
  d.examples.reserve(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& clip = clips[i];
    if (clip.class_id < 0 || static_cast<std::size_t>(clip.class_id) >= config.classes) {
      throw DataError("clip " + std::to_string(i) + " has class " +
                      std::to_string(clip.class_id) + " outside [0, " +
                      std::to_string(config.classes) + ")");
    }
    d.examples.push_back(
        {center_block(noisy_copy(clip.buffer, snr_db, noise, noise_seed, i), config),
         clip.class_id});
  }
  return d;
}

Dataset load_dataset(const std::filesystem::path& manifest, const ModelConfig& config,
                     double snr_db, NoiseKind noise, std::uint64_t noise_seed) {
  const std::vector<ManifestEntry> entries = read_manifest(manifest);
  std::vector<LabeledClip> clips;
  clips.reserve(entries.size());
  for (const auto& e : entries) {
    LabeledClip clip;
    clip.buffer = read_wav(e.path);
    clip.class_id = e.class_id;
    clips.push_back(std::move(clip));
  }
  return make_dataset(clips, config, snr_db, noise, noise_seed);
}

std::string split_name(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return "eval";
  return "eval_snr" + format_snr(snr_db);
}

std::vector<EvalSet> build_eval_sets(const std::vector<LabeledClip>& clips,
                                     const ModelConfig& config,
                                     const std::vector<double>& snrs, NoiseKind noise,
                                     std::uint64_t seed) {
  std::vector<EvalSet> sets;
  const std::uint64_t noise_seed = derive_seed(seed, "eval-noise");
  for (double snr : snrs) sets.push_back({snr, make_dataset(clips, config, snr, noise, noise_seed)});
  return sets;
}

std::vector<EvalSet> build_eval_sets(const std::filesystem::path& manifest,
                                     const ModelConfig& config,
                                     const std::vector<double>& snrs, NoiseKind noise,
                                     std::uint64_t seed) {
  const std::vector<ManifestEntry> entries = read_manifest(manifest);
  std::vector<LabeledClip> clips;
  for (const auto& e : entries) {
    LabeledClip clip;
    clip.buffer = read_wav(e.path);
    clip.class_id = e.class_id;
    clips.push_back(std::move(clip));
  }
  return build_eval_sets(clips, config, snrs, noise, seed);
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "epoch,split,loss,accuracy\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + r.split + "," + format_double(r.loss) + "," +
           format_double(r.accuracy) + "\n";
  }
  return out;
}

EvalResult evaluate(const AcousticModel& model, const Dataset& data, std::size_t batch) {
  if (data.size() == 0) throw DataError("evaluate: empty dataset");
  batch = std::max<std::size_t>(batch, 1);
  EvalResult r;
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t end = std::min(data.size(), start + batch);
    std::vector<const RawFrameBlock*> blocks;
    for (std::size_t i = start; i < end; ++i) blocks.push_back(&data.examples[i].block);
    const ForwardResult fr = forward(model, blocks, BatchNormMode::eval);
    for (std::size_t i = start; i < end; ++i) {
      const auto& logits = fr.logits[i - start];
      const int label = data.examples[i].class_id;
      loss += cross_entropy(logits, label);
      const auto top = std::max_element(logits.begin(), logits.end()) - logits.begin();
      if (top == label) ++correct;
    }
  }
  r.count = data.size();
  r.loss = loss / static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    auto j = static_cast<std::size_t>(uniform(rng, 0.0, 1.0) * static_cast<double>(i));
    j = std::min(j, i - 1);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

TrainResult train(const TrainConfig& config, const Dataset& train_set,
                  const std::vector<EvalSet>& eval_sets,
                  const std::optional<FilterFile>& initial_filters,
                  const ProgressFn& progress) {
  if (train_set.size() == 0) throw DataError("train: empty dataset");
  if (config.batch < 2) {
    throw ArgumentError("--batch: batch norm in train mode needs at least 2 examples, got " +
                        std::to_string(config.batch));
  }
  if (train_set.size() < 2) throw DataError("train: need at least 2 training clips");
  variant_of(config.model);

  TrainResult r;
  r.model = make_model(config.model, config.seed);
  if (initial_filters) import_filters(r.model, *initial_filters);
  r.optimizer.hyper.lr = config.lr;
  std::set<std::string> frozen;
  if (config.freeze_filters) frozen.insert("fb.mu");

  Rng shuffle = make_rng(config.seed, "shuffle");
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<std::size_t> order = shuffled_indices(train_set.size(), shuffle);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      // A trailing batch of one cannot be batch-normalised; skip it.
      if (end - start < 2) break;
      std::vector<const RawFrameBlock*> blocks;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        blocks.push_back(&train_set.examples[order[i]].block);
        labels.push_back(train_set.examples[order[i]].class_id);
      }
      LossResult lr = loss_and_gradients(r.model, blocks, labels, BatchNormMode::train);
      if (!std::isfinite(lr.loss)) {
        throw DegenerateInputError("train: non-finite loss at epoch " +
                                   std::to_string(epoch));
      }
      update_running_stats(r.model.params.bn, lr.cache.bn);
      const AdamReport rep = adam_step(r.model.params, lr.grads, r.optimizer, frozen);
      if (rep.mu_clipped > 0) {
        ++r.mu_clip_events;
        if (progress) {
          progress("step " + std::to_string(r.optimizer.step) + ": clipped " +
                   std::to_string(rep.mu_clipped) + " mu values into [" +
                   format_double(kMuFloor) + ", " + format_double(kMuCeiling) + "]");
        }
      }
      loss_sum += lr.loss * static_cast<double>(blocks.size());
      correct += lr.correct;
      seen += blocks.size();
    }
    MetricRow row{epoch, "train", loss_sum / static_cast<double>(seen),
                  static_cast<double>(correct) / static_cast<double>(seen)};
    r.metrics.push_back(row);
    std::string line = "epoch " + std::to_string(epoch) + "/" +
                       std::to_string(config.epochs) + " train loss " +
                       format_double(row.loss) + " acc " + format_double(row.accuracy);
    for (const auto& set : eval_sets) {
      const EvalResult e = evaluate(r.model, set.data);
      r.metrics.push_back({epoch, split_name(set.snr_db), e.loss, e.accuracy});
      line += " | " + split_name(set.snr_db) + " acc " + format_double(e.accuracy);
    }
    if (progress) progress(line);
  }
  return r;
}

TrainResult train(const TrainConfig& config, const ProgressFn& progress) {
  if (config.data.empty()) throw ArgumentError("--data: training manifest required");
  const Dataset train_set = load_dataset(config.data, config.model);
  std::vector<EvalSet> eval_sets;
  if (!config.eval_data.empty()) {
    eval_sets = build_eval_sets(config.eval_data, config.model, config.eval_snrs,
                                config.noise, config.seed);
  }
  return train(config, train_set, eval_sets, std::nullopt, progress);
}

GradCheckReport grad_check(const AcousticModel& model,
                           const std::vector<const RawFrameBlock*>& batch,
                           const std::vector<int>& labels, const GradCheckOptions& options) {
  GradientSet computed;
  const GradientSet* analytic = options.analytic_override;
  if (!analytic) {
    computed = loss_and_gradients(model, batch, labels, options.mode).grads;
    analytic = &computed;
  }
  std::vector<std::span<const double>> grads;
  for_each_parameter(*analytic, [&](const std::string&, std::span<const double> v) {
    grads.push_back(v);
  });

  GradCheckReport report;
  report.tol = options.tol;
  AcousticModel probe = model;
  const double root_eps = std::cbrt(std::numeric_limits<double>::epsilon());
  std::size_t group = 0;
  for_each_parameter(probe.params, [&](const std::string& name, std::span<double> v) {
    const std::span<const double> a = grads[group++];
    if (name == "fb.mu" && !probe.params.fb.learnable()) return;
    GradCheckGroup g;
    g.name = name;
    std::size_t stride = 1;
    if (options.max_entries_per_group > 0 && v.size() > options.max_entries_per_group) {
      stride = (v.size() + options.max_entries_per_group - 1) / options.max_entries_per_group;
    }
    for (std::size_t i = 0; i < v.size(); i += stride) {
      const double theta = v[i];
      const double h = root_eps * std::max(1.0, std::abs(theta));
      const double up = theta + h;
      const double down = theta - h;
      v[i] = up;
      const double lp = batch_loss(probe, batch, labels, options.mode);
      v[i] = down;
      const double lm = batch_loss(probe, batch, labels, options.mode);
      v[i] = theta;
      const double fd = (lp - lm) / (up - down);
      const double err = std::abs(a[i] - fd) / std::max(1.0, std::abs(a[i]));
      if (err > g.max_error) {
        g.max_error = err;
        g.worst_index = i;
      }
      ++g.checked;
    }
    g.pass = g.max_error <= options.tol;
    report.pass = report.pass && g.pass;
    report.groups.push_back(g);
  });
  return report;
}

std::string format_report(const GradCheckReport& report) {
  std::string out = "group,checked,max_rel_error,worst_index,status\n";
  for (const auto& g : report.groups) {
    out += g.name + "," + std::to_string(g.checked) + "," + format_double(g.max_error) + "," +
           std::to_string(g.worst_index) + "," + (g.pass ? "pass" : "FAIL") + "\n";
  }
  return out;
}

void check_transfer_compatible(const std::vector<TransferSource>& sources,
                               const ModelConfig& config) {
  for (const auto& src : sources) {
    if (src.filters.mu.size() != config.filters || src.filters.kernel_len != config.kernel_len) {
      throw ContractError("transfer: filters from '" + src.label + "' have f=" +
                          std::to_string(src.filters.mu.size()) +
                          " k=" + std::to_string(src.filters.kernel_len) +
                          ", target config has f=" + std::to_string(config.filters) +
                          " k=" + std::to_string(config.kernel_len));
    }
  }
}

std::vector<TransferRow> transfer_experiment(const std::vector<TransferSource>& sources,
                                             const TrainConfig& config,
                                             const Dataset& train_set,
                                             const std::vector<EvalSet>& eval_sets,
                                             const ProgressFn& progress) {
  check_transfer_compatible(sources, config.model);
  if (eval_sets.empty()) throw ArgumentError("transfer: no evaluation data");
  std::vector<TransferRow> rows;
  auto record = [&](const std::string& label, const AcousticModel& m) {
    for (const auto& set : eval_sets) {
      rows.push_back({label, set.snr_db, evaluate(m, set.data).accuracy});
    }
  };
  TrainConfig control = config;
  control.freeze_filters = false;
  if (progress) progress("training from-scratch control");
  record("scratch", train(control, train_set, {}, std::nullopt, progress).model);
  for (const auto& src : sources) {
    if (progress) progress("training with filters from " + src.label);
    record(src.label, train(config, train_set, {}, src.filters, progress).model);
  }
  return rows;
}

std::string transfer_csv(const std::vector<TransferRow>& rows) {
  std::string out = "filters_from,snr_db,accuracy\n";
  for (const auto& r : rows) {
    out += r.filters_from + "," + format_snr(r.snr_db) + "," + format_double(r.accuracy) + "\n";
  }
  return out;
}

}  // namespace relward
