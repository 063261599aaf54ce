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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "relward/errors.hpp"
#include "relward/io.hpp"
#include "relward/training.hpp"

namespace fs = std::filesystem;
using namespace relward;

namespace {

TrainConfig tiny_train(Variant v, std::size_t epochs = 2) {
  TrainConfig c;
  c.preset = "tiny";
  c.model = tiny_config();
  apply_variant(c.model, v);
  c.batch = 8;
  c.epochs = epochs;
  c.seed = 7;
  c.lr = 3e-3;
  return c;
}

std::vector<LabeledClip> clips(std::size_t n, int classes, std::uint64_t seed = 1, int table = 0) {
  SynthConfig s;
  s.count = n;
  s.seed = seed;
  s.classes = classes;
  s.table_id = table;
  return synthesize_dataset(s);
}

double train_loss(const TrainResult& r, std::size_t epoch) {
  for (const auto& row : r.metrics)
    if (row.epoch == epoch && row.split == "train") return row.loss;
  return NAN;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("relward_training_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Synthesis, DatasetIsBalancedDeterministicAndCyclesSnr) {
  SynthConfig s;
  s.count = 24;
  s.classes = 4;
  s.seed = 3;
  s.snrs = {kCleanSnr, 10.0};
  const auto a = synthesize_dataset(s), b = synthesize_dataset(s);
  ASSERT_EQ(a.size(), 24u);
  for (std::size_t i = 0; i < 24; ++i) {
    EXPECT_EQ(a[i].class_id, static_cast<int>(i % 4));
    EXPECT_EQ(a[i].buffer.samples, b[i].buffer.samples);
    // Blocks of `classes` clips alternate clean and 10 dB.
    if ((i / 4) % 2 == 0) {
      EXPECT_FALSE(a[i].snr_db.has_value());
    } else {
      ASSERT_TRUE(a[i].snr_db.has_value());
      EXPECT_EQ(*a[i].snr_db, 10.0);
    }
  }
  s.seed = 4;
  EXPECT_NE(synthesize_dataset(s)[0].buffer.samples, a[0].buffer.samples);
  s.classes = 9;
  EXPECT_THROW(synthesize_dataset(s), ArgumentError);
}

TEST(Synthesis, WrittenDatasetLoadsBackIdentically) {
  const fs::path dir = scratch_dir("roundtrip");
  const auto c = clips(6, 3);
  const fs::path manifest = write_dataset(dir, c);
  const ModelConfig mc = tiny_config();
  const Dataset from_disk = load_dataset(manifest, mc);
  const Dataset in_memory = make_dataset(c, mc);
  ASSERT_EQ(from_disk.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(from_disk.examples[i].class_id, in_memory.examples[i].class_id);
    // WAV quantisation: within half a 16-bit step.
    for (std::size_t k = 0; k < from_disk.examples[i].block.frames.size(); k += 97)
      EXPECT_NEAR(from_disk.examples[i].block.frames[k], in_memory.examples[i].block.frames[k], 0.5 / 32768 + 1e-12);
  }
  fs::remove_all(dir);
}

TEST(Datasets, CentreBlockGeometry) {
  const ModelConfig c = tiny_config();
  const auto cl = clips(1, 1);
  const RawFrameBlock b = center_block(cl[0].buffer, c);
  EXPECT_EQ(b.frame_count(), 11u);
  EXPECT_EQ(b.frame_len, 400u);
  EXPECT_EQ(b.center_index, 5u);
  // Centre frame starts half a frame before the clip midpoint.
  const std::size_t start = cl[0].buffer.samples.size() / 2 - 200;
  EXPECT_EQ(b.frames.at(5, 0), cl[0].buffer.samples[start]);
}

TEST(Training, LossDecreasesAndIsFinite) {
  const Dataset data = make_dataset(clips(32, 3), tiny_config());
  for (Variant v : {Variant::A_R_M_R, Variant::MFB}) {
    const TrainResult r = train(tiny_train(v), data);
    const double l1 = train_loss(r, 1), l2 = train_loss(r, 2);
    EXPECT_TRUE(std::isfinite(l1) && std::isfinite(l2));
    EXPECT_LT(l2, l1) << to_string(v);
  }
}

TEST(Training, SameSeedGivesIdenticalBytes) {
  const Dataset data = make_dataset(clips(16, 3), tiny_config());
  const auto eval = build_eval_sets(clips(6, 3, 9), tiny_config(), {kCleanSnr, 0.0}, NoiseKind::white, 1);
  const TrainResult a = train(tiny_train(Variant::S_R_M_R), data, eval);
  const TrainResult b = train(tiny_train(Variant::S_R_M_R), data, eval);
  EXPECT_EQ(serialize_checkpoint(a.model, a.optimizer.step), serialize_checkpoint(b.model, b.optimizer.step));
  EXPECT_EQ(metrics_csv(a.metrics), metrics_csv(b.metrics));
  TrainConfig other = tiny_train(Variant::S_R_M_R);
  other.seed = 8;
  EXPECT_NE(serialize_checkpoint(train(other, data).model, 0), serialize_checkpoint(a.model, 0));
}

TEST(Training, MetricsRowsAndSplits) {
  const Dataset data = make_dataset(clips(16, 3), tiny_config());
  const auto eval = build_eval_sets(clips(6, 3, 9), tiny_config(), {kCleanSnr, 10.0}, NoiseKind::white, 1);
  const TrainResult r = train(tiny_train(Variant::A, 2), data, eval);
  ASSERT_EQ(r.metrics.size(), 6u);
  EXPECT_EQ(r.metrics[0].split, "train");
  EXPECT_EQ(r.metrics[1].split, "eval");
  EXPECT_EQ(r.metrics[2].split, "eval_snr10");
  const std::string csv = metrics_csv(r.metrics);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,split,loss,accuracy");
  EXPECT_EQ(r.optimizer.step, 4u);
}

TEST(Training, RejectsBadInputs) {
  const Dataset data = make_dataset(clips(8, 3), tiny_config());
  TrainConfig c = tiny_train(Variant::A, 1);
  c.batch = 1;
  EXPECT_THROW(train(c, data), ArgumentError);
  EXPECT_THROW(train(tiny_train(Variant::A, 1), Dataset{}), DataError);
}

TEST(Training, FrozenFiltersStayAtImportedValues) {
  const Dataset data = make_dataset(clips(16, 3), tiny_config());
  TrainConfig c = tiny_train(Variant::A_R, 1);
  c.freeze_filters = true;
  FilterbankParams fb = make_model(c.model, 0).params.fb;
  FilterFile f{fb.family, fb.kernel_len, fb.mu};
  for (double& v : f.mu) v *= 0.97;
  const TrainResult r = train(c, data, {}, f);
  EXPECT_EQ(r.model.params.fb.mu, f.mu);
  c.freeze_filters = false;
  EXPECT_NE(train(c, data, {}, f).model.params.fb.mu, f.mu);
}

TEST(Evaluate, RandomModelIsNearChance) {
  ModelConfig mc = tiny_config();
  mc.classes = 8;
  const Dataset data = make_dataset(clips(240, 8, 5), mc);
  const EvalResult r = evaluate(make_model(mc, 11), data);
  const double sigma = std::sqrt(0.125 * 0.875 / 240.0);
  EXPECT_EQ(r.count, 240u);
  EXPECT_NEAR(r.accuracy, 0.125, 3.0 * sigma);
}

TEST(Evaluate, InfiniteSnrEqualsClean) {
  const auto c = clips(12, 3, 6);
  const ModelConfig mc = tiny_config();
  const AcousticModel m = fixture::perturbed_model(Variant::A_R_M_R);
  const auto sets = build_eval_sets(c, mc, {kCleanSnr, 5.0}, NoiseKind::white, 2);
  const EvalResult clean = evaluate(m, make_dataset(c, mc));
  const EvalResult inf = evaluate(m, sets[0].data);
  EXPECT_EQ(clean.accuracy, inf.accuracy);
  EXPECT_EQ(clean.loss, inf.loss);
  EXPECT_NE(evaluate(m, sets[1].data).loss, clean.loss);
  EXPECT_EQ(split_name(kCleanSnr), "eval");
  EXPECT_EQ(split_name(-5.0), "eval_snr-5");
}

TEST(Evaluate, RepeatsAreDeterministic) {
  const auto c = clips(9, 3, 6);
  const auto a = build_eval_sets(c, tiny_config(), {20.0, 10.0, 0.0}, NoiseKind::white, 2);
  const auto b = build_eval_sets(c, tiny_config(), {20.0, 10.0, 0.0}, NoiseKind::white, 2);
  const AcousticModel m = fixture::perturbed_model(Variant::A);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(evaluate(m, a[i].data).loss, evaluate(m, b[i].data).loss);
}

TEST(GradCheckHarness, CorruptedGradientIsReported) {
  const AcousticModel m = fixture::perturbed_model(Variant::A_R);
  const fixture::Batch b = fixture::clip_batch(m.config, 2);
  GradientSet bad = loss_and_gradients(m, b.ptrs(), b.labels, BatchNormMode::train).grads;
  bad.head.fc2.bias[3] += 0.5;
  GradCheckOptions o;
  o.analytic_override = &bad;
  const GradCheckReport rep = grad_check(m, b.ptrs(), b.labels, o);
  EXPECT_FALSE(rep.pass);
  for (const auto& g : rep.groups) {
    EXPECT_EQ(g.pass, g.name != "head.fc2.bias") << g.name;
    if (g.name == "head.fc2.bias") EXPECT_EQ(g.worst_index, 3u);
  }
  const std::string csv = format_report(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "group,checked,max_rel_error,worst_index,status");
  o.tol = std::numeric_limits<double>::infinity();
  EXPECT_TRUE(grad_check(m, b.ptrs(), b.labels, o).pass);
}

TEST(GradCheckHarness, FixedFilterbankHasNoMuGroup) {
  const AcousticModel m = fixture::perturbed_model(Variant::MFB_R);
  const fixture::Batch b = fixture::clip_batch(m.config, 2);
  GradCheckOptions o;
  o.max_entries_per_group = 4;
  const GradCheckReport rep = grad_check(m, b.ptrs(), b.labels, o);
  EXPECT_TRUE(rep.pass) << format_report(rep);
  for (const auto& g : rep.groups) EXPECT_NE(g.name, "fb.mu");
}

TEST(Config, FileThenOverridesWithPresetFirst) {
  const fs::path dir = scratch_dir("config");
  std::ofstream(dir / "run.cfg") << "# comment\nfilters = 16  # trailing\nepochs=3\n"
                                    "variant=Sinc\npreset=tiny\nsnr=inf,10\n";
  TrainConfig c;
  apply_config(c, read_config_file(dir / "run.cfg"));
  // The preset resets the model first, so filters=16 survives it.
  EXPECT_EQ(c.preset, "tiny");
  EXPECT_EQ(c.model.filters, 16u);
  EXPECT_EQ(c.model.frames, 11u);
  EXPECT_EQ(c.model.family, KernelFamily::sinc);
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.eval_snrs.size(), 2u);
  apply_config(c, {{"epochs", "5"}, {"variant", "A"}});
  EXPECT_EQ(c.epochs, 5u);
  EXPECT_EQ(variant_of(c.model), Variant::A);
  EXPECT_THROW(apply_config(c, {{"bogus", "1"}}), ArgumentError);
  EXPECT_THROW(apply_config(c, {{"lr", "-1"}}), ArgumentError);
  std::ofstream(dir / "bad.cfg") << "filters 16\n";
  EXPECT_THROW(read_config_file(dir / "bad.cfg"), FormatError);
  // Entries written by train_config_entries parse back to the same config.
  TrainConfig back;
  apply_config(back, train_config_entries(c));
  EXPECT_EQ(train_config_entries(back), train_config_entries(c));
  fs::remove_all(dir);
}

TEST(Config, SnrLists) {
  EXPECT_EQ(parse_snr_list("inf, 20,0,-5"), (std::vector<double>{kCleanSnr, 20.0, 0.0, -5.0}));
  EXPECT_EQ(format_snr_list({kCleanSnr, 10.0, 2.5}), "inf,10,2.5");
  EXPECT_THROW(parse_snr_list("10,,5"), ArgumentError);
  EXPECT_THROW(parse_snr_list("loud"), ArgumentError);
}

TEST(Shuffle, IsADeterministicPermutation) {
  Rng a = make_rng(1, "shuffle"), b = make_rng(1, "shuffle");
  const auto p = shuffled_indices(50, a), q = shuffled_indices(50, b);
  EXPECT_EQ(p, q);
  EXPECT_EQ(std::set<std::size_t>(p.begin(), p.end()).size(), 50u);
  EXPECT_NE(p, shuffled_indices(50, a));
}

TEST(Transfer, MismatchedFiltersFailBeforeTraining) {
  TrainConfig c = tiny_train(Variant::A_R, 1);
  FilterFile wide{KernelFamily::cosine_gaussian, c.model.kernel_len, std::vector<double>(80, 0.1)};
  const Dataset data = make_dataset(clips(8, 3), c.model);
  const auto eval = build_eval_sets(clips(3, 3, 2), c.model, {kCleanSnr}, NoiseKind::white, 1);
  EXPECT_THROW(transfer_experiment({{"wide", wide}}, c, data, eval), ContractError);
  FilterFile long_k{KernelFamily::cosine_gaussian, 33, std::vector<double>(c.model.filters, 0.1)};
  EXPECT_THROW(check_transfer_compatible({{"k", long_k}}, c.model), ContractError);
}

TEST(Transfer, TwoByTwoTableAcrossClassTables) {
  TrainConfig c = tiny_train(Variant::A_R, 1);
  c.freeze_filters = true;
  std::vector<TransferSource> sources;
  std::vector<Dataset> targets;
  std::vector<std::vector<EvalSet>> evals;
  for (int table = 0; table < 2; ++table) {
    targets.push_back(make_dataset(clips(12, 3, 20, table), c.model));
    evals.push_back(build_eval_sets(clips(6, 3, 30, table), c.model, {kCleanSnr}, NoiseKind::white, 1));
    const TrainResult src = train(c, targets.back());
    sources.push_back({"table" + std::to_string(table),
                       {src.model.params.fb.family, c.model.kernel_len, src.model.params.fb.mu}});
  }
  std::size_t cells = 0;
  for (int table = 0; table < 2; ++table) {
    const auto rows = transfer_experiment(sources, c, targets[table], evals[table]);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].filters_from, "scratch");
    for (const auto& r : rows) {
      EXPECT_GE(r.accuracy, 0.0);
      EXPECT_LE(r.accuracy, 1.0);
      if (r.filters_from != "scratch") ++cells;
    }
    const std::string csv = transfer_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "filters_from,snr_db,accuracy");
  }
  EXPECT_EQ(cells, 4u);
}
