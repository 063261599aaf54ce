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

// Command-line trainer: dataset synthesis, training, evaluation, gradient
// checks, filter export/import, inspection dumps and the transfer experiment.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "relward/errors.hpp"
#include "relward/io.hpp"
#include "relward/model.hpp"
#include "relward/training.hpp"

namespace fs = std::filesystem;
using namespace relward;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

void log_line(const std::string& s) { std::cerr << s << "\n"; }

// Flags shared by every command that builds or trains a model.
struct TrainFlags {
  std::string config_file;
  std::optional<std::string> preset, variant, data, eval_data, snr, noise;
  std::optional<std::size_t> epochs, batch;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  bool freeze = false;
  std::vector<std::string> sets;

  void add(CLI::App* app, bool training) {
    app->add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    app->add_option("--preset", preset, "model size preset: full, desk, tiny");
    app->add_option("--variant", variant, "MFB, MFB-R, A, A-R, A-R,M-R, Sinc, S-R,M-R");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--set", sets, "override a config key (key=value)");
    if (!training) return;
    app->add_option("--data", data, "training manifest");
    app->add_option("--eval", eval_data, "evaluation manifest");
    app->add_option("--snr", snr, "evaluation SNRs in dB, comma separated (inf = clean)");
    app->add_option("--noise", noise, "evaluation noise: white or pink");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--batch", batch, "batch size (>= 2)");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_flag("--freeze-filters", freeze, "keep filter centre frequencies fixed");
  }

  // flags > file > defaults
  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_file.empty()) apply_config(c, read_config_file(config_file));
    std::vector<std::pair<std::string, std::string>> kv;
    if (preset) kv.emplace_back("preset", *preset);
    if (variant) kv.emplace_back("variant", *variant);
    if (seed) kv.emplace_back("seed", std::to_string(*seed));
    if (data) kv.emplace_back("data", *data);
    if (eval_data) kv.emplace_back("eval_data", *eval_data);
    if (snr) kv.emplace_back("snr", *snr);
    if (noise) kv.emplace_back("noise", *noise);
    if (epochs) kv.emplace_back("epochs", std::to_string(*epochs));
    if (batch) kv.emplace_back("batch", std::to_string(*batch));
    if (lr) kv.emplace_back("lr", format_double(*lr));
    if (freeze) kv.emplace_back("freeze_filters", "true");
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ArgumentError("--set: expected key=value, got '" + s + "'");
      kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    apply_config(c, kv);
    stage_shapes(c.model);
    return c;
  }
};

std::string record(const std::string& command, const TrainConfig& c) {
  std::string out = "# " + std::string(kArtifactVersion) + " " + command + "\n";
  for (const auto& [k, v] : train_config_entries(c)) out += k + "=" + v + "\n";
  return out;
}

void write_out(const std::optional<std::string>& path, const std::string& text) {
  if (path) {
    write_file_atomic(*path, text);
  } else {
    std::cout << text;
  }
}

int cmd_synth(const fs::path& out, const SynthConfig& sc, const std::string& snr_flag) {
  SynthConfig c = sc;
  c.snrs = parse_snr_list(snr_flag);
  const fs::path manifest = write_dataset(out, synthesize_dataset(c));
  std::string rec = "# " + std::string(kArtifactVersion) + " synth-data\n";
  rec += "count=" + std::to_string(c.count) + "\nseed=" + std::to_string(c.seed) +
         "\ntable=" + std::to_string(c.table_id) + "\nclasses=" + std::to_string(c.classes) +
         "\nsnr=" + format_snr_list(c.snrs) + "\nnoise=" +
         (c.noise == NoiseKind::white ? "white" : "pink") + "\n";
  write_file_atomic(out / "config.txt", rec);
  log_line("wrote " + std::to_string(c.count) + " clips, manifest " + manifest.string());
  return kExitOk;
}

int cmd_train(const TrainFlags& flags, const fs::path& out) {
  const TrainConfig c = flags.resolve();
  fs::create_directories(out);
  write_file_atomic(out / "config.txt", record("train", c));
  const TrainResult r = train(c, log_line);
  save_checkpoint(out / "checkpoint.txt", r.model, r.optimizer.step);
  write_file_atomic(out / "metrics.csv", metrics_csv(r.metrics));
  log_line("wrote " + (out / "checkpoint.txt").string());
  return kExitOk;
}

int cmd_eval(const fs::path& checkpoint, const std::string& data, const std::string& snr,
             const std::string& noise, std::uint64_t seed,
             const std::optional<std::string>& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  TrainConfig tc;
  set_train_value(tc, "noise", noise);
  const auto sets =
      build_eval_sets(fs::path(data), ck.model.config, parse_snr_list(snr), tc.noise, seed);
  std::string csv = "snr_db,loss,accuracy,count\n";
  for (const auto& s : sets) {
    const EvalResult e = evaluate(ck.model, s.data);
    csv += format_snr(s.snr_db) + "," + format_double(e.loss) + "," +
           format_double(e.accuracy) + "," + std::to_string(e.count) + "\n";
  }
  write_out(out, csv);
  return kExitOk;
}

int cmd_grad_check(const TrainFlags& flags, double tol, std::size_t batch,
                   std::size_t max_entries, const std::optional<std::string>& out) {
  TrainFlags f = flags;
  if (!f.preset && f.config_file.empty()) f.preset = "tiny";
  const TrainConfig c = f.resolve();
  if (batch < 2) throw ArgumentError("--batch: train-mode check needs at least 2 examples");
  const AcousticModel model = make_model(c.model, c.seed);
  SynthConfig sc;
  sc.count = batch;
  sc.seed = c.seed;
  sc.classes = static_cast<int>(std::min<std::size_t>(c.model.classes, kDefaultClassCount));
  const Dataset d = make_dataset(synthesize_dataset(sc), c.model);
  std::vector<const RawFrameBlock*> blocks;
  std::vector<int> labels;
  for (const auto& e : d.examples) {
    blocks.push_back(&e.block);
    labels.push_back(e.class_id);
  }
  GradCheckOptions o;
  o.tol = tol;
  o.max_entries_per_group = max_entries;
  const GradCheckReport rep = grad_check(model, blocks, labels, o);
  write_out(out, format_report(rep));
  log_line(rep.pass ? "grad-check: pass" : "grad-check: FAIL");
  return rep.pass ? kExitOk : kExitData;
}

int cmd_export(const fs::path& checkpoint, const fs::path& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  write_filters(out, ck.model.params.fb);
  return kExitOk;
}

int cmd_import(const fs::path& filters, const std::optional<std::string>& checkpoint,
               const TrainFlags& flags, const fs::path& out) {
  const FilterFile ff = read_filters(filters);
  AcousticModel model;
  std::uint64_t step = 0;
  if (checkpoint) {
    Checkpoint ck = load_checkpoint(*checkpoint);
    model = std::move(ck.model);
    step = ck.step;
  } else {
    const TrainConfig c = flags.resolve();
    model = make_model(c.model, c.seed);
  }
  import_filters(model, ff);
  save_checkpoint(out, model, step);
  return kExitOk;
}

int cmd_inspect(const fs::path& checkpoint, const std::optional<std::string>& data,
                const std::string& what, const std::optional<std::string>& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const AcousticModel& m = ck.model;
  std::string csv;
  if (what == "weights") {
    if (!data) throw ArgumentError("--data: required for --what weights");
    const Dataset d = load_dataset(*data, m.config);
    csv = "input_id,stage,idx,weight\n";
    for (std::size_t i = 0; i < d.size(); ++i) {
      const ForwardResult fr = forward(m, {&d.examples[i].block}, BatchNormMode::eval);
      const SampleCache& s = fr.cache.samples[0];
      auto dump = [&](const char* stage, const std::vector<double>& w, std::size_t n) {
        for (std::size_t j = 0; j < n; ++j) {
          csv += std::to_string(i) + "," + stage + "," + std::to_string(j) + "," +
                 format_double(w.empty() ? 1.0 : w[j]) + "\n";
        }
      };
      dump("w_a", s.w_a, m.config.filters);
      dump("w_m", s.w_m, m.config.mod_filters);
    }
  } else if (what == "kernels") {
    csv = "kernel,row,col,value\n";
    const Tensor& k = m.params.mod_kernels.kernels;
    for (std::size_t a = 0; a < k.dim(0); ++a) {
      for (std::size_t r = 0; r < k.dim(1); ++r) {
        for (std::size_t c = 0; c < k.dim(2); ++c) {
          csv += std::to_string(a) + "," + std::to_string(r) + "," + std::to_string(c) + "," +
                 format_double(k.at(a, r, c)) + "\n";
        }
      }
    }
  } else if (what == "filters") {
    csv = "filter,mu,center_hz\n";
    for (std::size_t i = 0; i < m.params.fb.mu.size(); ++i) {
      csv += std::to_string(i) + "," + format_double(m.params.fb.mu[i]) + "," +
             format_double(m.params.fb.mu[i] * kSampleRate) + "\n";
    }
  } else {
    throw ArgumentError("--what: expected weights, kernels or filters, got '" + what + "'");
  }
  write_out(out, csv);
  return kExitOk;
}

int cmd_transfer(const TrainFlags& flags, const std::vector<std::string>& sources,
                 const fs::path& out) {
  const TrainConfig c = flags.resolve();
  if (c.data.empty()) throw ArgumentError("--data: training manifest required");
  if (c.eval_data.empty()) throw ArgumentError("--eval: evaluation manifest required");
  std::vector<TransferSource> src;
  for (const auto& s : sources) {
    const Checkpoint ck = load_checkpoint(s);
    FilterFile ff{ck.model.params.fb.family, ck.model.params.fb.kernel_len, ck.model.params.fb.mu};
    src.push_back({s, ff});
  }
  check_transfer_compatible(src, c.model);
  fs::create_directories(out);
  write_file_atomic(out / "config.txt", record("transfer", c));
  const Dataset train_set = load_dataset(c.data, c.model);
  const auto eval_sets = build_eval_sets(fs::path(c.eval_data), c.model, c.eval_snrs, c.noise, c.seed);
  const auto rows = transfer_experiment(src, c, train_set, eval_sets, log_line);
  write_file_atomic(out / "transfer.csv", transfer_csv(rows));
  std::cout << transfer_csv(rows);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relward: relevance-weighted learnable audio front-end trainer"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth-data", "write a synthetic labelled WAV dataset");
  std::string synth_out;
  SynthConfig sc;
  std::string synth_snr = "inf";
  std::string synth_noise = "white";
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--count", sc.count, "number of clips");
  synth->add_option("--seed", sc.seed, "data seed");
  synth->add_option("--table", sc.table_id, "class table: 0 primary, 1 alternate");
  synth->add_option("--classes", sc.classes, "number of classes");
  synth->add_option("--snr", synth_snr, "SNR conditions cycled over clips (inf = clean)");
  synth->add_option("--noise", synth_noise, "white or pink");

  auto* train_cmd = app.add_subcommand("train", "train one variant");
  TrainFlags train_flags;
  std::string train_out;
  train_flags.add(train_cmd, true);
  train_cmd->add_option("--out", train_out, "run directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "accuracy per SNR condition");
  std::string eval_ckpt, eval_data, eval_snr = "inf", eval_noise = "white";
  std::uint64_t eval_seed = 0;
  std::optional<std::string> eval_out;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "evaluation manifest")->required();
  eval_cmd->add_option("--snr", eval_snr, "SNRs in dB, comma separated (inf = clean)");
  eval_cmd->add_option("--noise", eval_noise, "white or pink");
  eval_cmd->add_option("--seed", eval_seed, "noise seed");
  eval_cmd->add_option("--out", eval_out, "CSV path (default stdout)");

  auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference gradient check");
  TrainFlags gc_flags;
  double gc_tol = 1e-4;
  std::size_t gc_batch = 3, gc_max = 0;
  std::optional<std::string> gc_out;
  gc_flags.add(gc_cmd, false);
  gc_cmd->add_option("--tol", gc_tol, "max relative error");
  gc_cmd->add_option("--batch", gc_batch, "examples in the check batch");
  gc_cmd->add_option("--max-entries", gc_max, "entries per group (0 = all)");
  gc_cmd->add_option("--out", gc_out, "report path (default stdout)");

  auto* export_cmd = app.add_subcommand("export-filters", "write filter centre frequencies");
  std::string export_ckpt, export_out;
  export_cmd->add_option("checkpoint", export_ckpt, "checkpoint file")->required();
  export_cmd->add_option("--out", export_out, "filters file")->required();

  auto* import_cmd = app.add_subcommand("import-filters", "load filters into a model");
  std::string import_file, import_out;
  std::optional<std::string> import_ckpt;
  TrainFlags import_flags;
  import_flags.add(import_cmd, false);
  import_cmd->add_option("filters", import_file, "filters file")->required();
  import_cmd->add_option("--checkpoint", import_ckpt, "target checkpoint (default: fresh model)");
  import_cmd->add_option("--out", import_out, "output checkpoint")->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "dump relevance weights, kernels or filters");
  std::string inspect_ckpt, inspect_what = "weights";
  std::optional<std::string> inspect_data, inspect_out;
  inspect_cmd->add_option("--checkpoint", inspect_ckpt, "checkpoint file")->required();
  inspect_cmd->add_option("--data", inspect_data, "manifest (for weights)");
  inspect_cmd->add_option("--what", inspect_what, "weights, kernels or filters");
  inspect_cmd->add_option("--out", inspect_out, "CSV path (default stdout)");

  auto* transfer_cmd = app.add_subcommand("transfer", "imported-filter transfer experiment");
  TrainFlags transfer_flags;
  std::vector<std::string> transfer_sources;
  std::string transfer_out;
  transfer_flags.add(transfer_cmd, true);
  transfer_cmd->add_option("--source", transfer_sources, "source checkpoint(s)")->required();
  transfer_cmd->add_option("--out", transfer_out, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) {
      TrainConfig tmp;
      set_train_value(tmp, "noise", synth_noise);
      sc.noise = tmp.noise;
      return cmd_synth(synth_out, sc, synth_snr);
    }
    if (*train_cmd) return cmd_train(train_flags, train_out);
    if (*eval_cmd) return cmd_eval(eval_ckpt, eval_data, eval_snr, eval_noise, eval_seed, eval_out);
    if (*gc_cmd) return cmd_grad_check(gc_flags, gc_tol, gc_batch, gc_max, gc_out);
    if (*export_cmd) return cmd_export(export_ckpt, export_out);
    if (*import_cmd) return cmd_import(import_file, import_ckpt, import_flags, import_out);
    if (*inspect_cmd) return cmd_inspect(inspect_ckpt, inspect_data, inspect_what, inspect_out);
    if (*transfer_cmd) return cmd_transfer(transfer_flags, transfer_sources, transfer_out);
  } catch (const ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
