// Copyright 2026 The MemeFier-cpp Authors.
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


#include "memefier/checkpoint.hpp"
#include "memefier/config_file.hpp"
#include "memefier/digest.hpp"
#include "memefier/training.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

using namespace memefier;

namespace {

ModelConfig quick_model() {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.ff_dim = 16;
  c.decoder_dim = 8;
  c.decoder_heads = 2;
  c.decoder_ff = 8;
  return c;
}

TrainConfig quick_train(int epochs = 3) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 8;
  t.seed = 5;
  return t;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("memefier_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig t;
  t.lr = 1e-4;
  t.epochs = 16;
  CHECK(t.drop_epoch() == 8);
  for (int e = 1; e <= 8; ++e) CHECK(t.lr_at(e) == 1e-4);
  for (int e = 9; e <= 16; ++e) CHECK(t.lr_at(e) == doctest::Approx(1e-5).epsilon(1e-15));
  t.epochs = 7;
  CHECK(t.drop_epoch() == 4);
  CHECK(t.lr_at(4) == 1e-4);
  CHECK(t.lr_at(5) < 1e-4);
  t.lr_drop_at = 2;
  CHECK(t.lr_at(3) < 1e-4);
}

TEST_CASE("train config validation and key values") {
  TrainConfig t;
  t.epochs = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.lr = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);

  TrainConfig a;
  a.lr = 3e-4;
  a.epochs = 9;
  a.seed = 42;
  TrainConfig b;
  apply_key_values(b, to_key_values(a));
  CHECK(a == b);
  CHECK_THROWS_AS(apply_key_values(b, {{"train.nonsense", "1"}}), ConfigError);

  ModelConfig m;
  m.alpha = 0.8;
  m.heads = {parse_head("a:multiclass:3"), parse_head("b:multilabel:2")};
  ModelConfig n;
  apply_key_values(n, to_key_values(m));
  CHECK(m == n);
  CHECK_THROWS_AS(apply_key_values(n, {{"model.d_model", "abc"}}), ConfigError);
}

TEST_CASE("training is deterministic and improves the training loss") {
  const auto data = generate_synthetic(48, 16, 2, 2, 3);
  const auto a = train(quick_model(), quick_train(), data);
  const auto b = train(quick_model(), quick_train(), data);
  CHECK(format_history(a.history) == format_history(b.history));
  CHECK(serialize_checkpoint(a.final_model) == serialize_checkpoint(b.final_model));
  CHECK(serialize_checkpoint(a.best_model) == serialize_checkpoint(b.best_model));
  REQUIRE(a.history.size() == 3);
  CHECK(a.history.back().train.total < a.history.front().train.total);
  CHECK(a.history[0].lr == quick_train().lr);
  CHECK(a.history[2].lr == doctest::Approx(quick_train().lr / 10));
  CHECK(a.best_epoch >= 1);
  CHECK(a.best_score == a.history[static_cast<std::size_t>(a.best_epoch - 1)].val_metrics.score());

  auto other = quick_train();
  other.seed = 6;
  CHECK(format_history(train(quick_model(), other, data).history) != format_history(a.history));
}

TEST_CASE("training errors") {
  auto data = generate_synthetic(16, 16, 2, 2, 1);
  for (auto& s : data.splits) s = Split::kTrain;
  CHECK_THROWS(train(quick_model(), quick_train(1), data));

  auto broken = generate_synthetic(16, 16, 2, 2, 1);
  for (std::size_t i = 0; i < broken.samples.size(); ++i) {
    if (broken.splits[i] == Split::kTrain) broken.samples[i].text_global(0, 0) = std::numeric_limits<float>::quiet_NaN();
  }
  try {
    (void)train(quick_model(), quick_train(1), broken);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("evaluate handles several head kinds") {
  auto data = generate_synthetic(24, 16, 2, 2, 8);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    data.samples[i].labels["mood"] = {static_cast<std::int32_t>(i % 3)};
    data.samples[i].labels["tags"] = {static_cast<std::int32_t>(i % 2), 1};
  }
  auto m = quick_model();
  m.heads = {parse_head("hate:binary"), parse_head("mood:multiclass:3"), parse_head("tags:multilabel:2")};
  const auto r = train(m, quick_train(2), data);
  const auto idx = data.indices(Split::kTrain);
  const auto ev = evaluate(r.final_model, data, idx);
  CHECK(ev.metrics.sample_count == idx.size());
  CHECK(ev.metrics.tasks.size() == 3);
  CHECK_FALSE(ev.metrics.tasks.at("mood").auc);
  for (const auto& [name, t] : ev.metrics.tasks) {
    CHECK(t.accuracy >= 0.0);
    CHECK(t.accuracy <= 1.0);
    CHECK(t.macro_f1 <= 1.0);
  }
}

TEST_CASE("grid enumeration and validation") {
  GridPoint base{quick_model(), quick_train()};
  const auto grid = standard_grid(base);
  CHECK(grid.size() == 64);
  std::set<std::string> keys;
  const auto data = generate_synthetic(16, 16, 2, 2, 0);
  for (const auto& p : grid) keys.insert(grid_point_key(p, manifest_digest(data)));
  CHECK(keys.size() == 64);

  auto bad = base;
  bad.train.epochs = 0;
  const auto dir = fresh_dir("grid_invalid");
  CHECK_THROWS_AS(grid_search({base, bad}, data, dir), ConfigError);
  CHECK(std::filesystem::is_empty(dir));
}

TEST_CASE("single-point grid equals train and resumes from cache") {
  const auto data = generate_synthetic(32, 16, 2, 2, 2);
  GridPoint p{quick_model(), quick_train(2)};
  const auto dir = fresh_dir("grid_cache");
  const auto first = grid_search({p}, data, dir);
  REQUIRE(first.size() == 1);
  REQUIRE(first[0].ok);
  CHECK_FALSE(first[0].from_cache);
  const auto direct = train(p.model, p.train, data);
  CHECK(first[0].score == direct.best_score);
  CHECK(first[0].best_epoch == direct.best_epoch);

  auto q = p;
  q.train.lr = 5e-4;
  const auto second = grid_search({p, q}, data, dir);
  REQUIRE(second.size() == 2);
  for (const auto& r : second) {
    if (r.key == first[0].key) {
      CHECK(r.from_cache);
      CHECK(r.score == first[0].score);
    } else {
      CHECK_FALSE(r.from_cache);
    }
  }
  CHECK(second[0].score >= second[1].score);
  CHECK(format_grid_table(second).find(first[0].key.substr(0, 10)) != std::string::npos);
}

TEST_CASE("grid records failed points") {
  auto data = generate_synthetic(32, 16, 2, 2, 2);
  GridPoint ok{quick_model(), quick_train(1)};
  GridPoint failing = ok;
  failing.model.max_positions = 4;  // shorter than any sequence
  const auto dir = fresh_dir("grid_fail");
  const auto res = grid_search({failing, ok}, data, dir);
  REQUIRE(res.size() == 2);
  CHECK(res[0].ok);
  CHECK_FALSE(res[1].ok);
  CHECK_FALSE(res[1].error.empty());
}

TEST_CASE("ablation table") {
  const auto data = generate_synthetic(40, 16, 2, 2, 6);
  const auto table = ablate(quick_model(), quick_train(1), data);
  REQUIRE(table.rows.size() == 5);
  CHECK(table.rows[0].label == "MemeFier");
  CHECK(table.rows[1].label == "- External knowledge");
  CHECK(table.rows[2].label == "- Caption supervision");
  CHECK(table.rows[3].label == "- Fusion stage 1");
  CHECK(table.rows[4].label == "- Fusion stage 2");
  CHECK(table.rows[2].ablations.no_caption);
  auto full = quick_model();
  full.adopt_manifest(data);
  auto nocap = full;
  nocap.ablations.no_caption = true;
  nocap.alpha = 0;
  CHECK(table.rows[0].parameter_count - table.rows[2].parameter_count ==
        MemeFier<float>(full).count_parameters().per_module.at("dec"));
  CHECK(table.rows[2].parameter_count == MemeFier<float>(nocap).count_parameters().total);

  const auto back = AblationTable::from_json(table.to_json());
  REQUIRE(back.rows.size() == 5);
  CHECK(back.rows[4].val_score == table.rows[4].val_score);
  CHECK(back.to_text() == table.to_text());

  auto ablated = quick_model();
  ablated.ablations.no_stage1 = true;
  CHECK_THROWS(ablate(ablated, quick_train(1), data));
}

TEST_CASE("key-value files") {
  const auto dir = fresh_dir("kv");
  KeyValues kv{{"a", "1"}, {"b.c", "x y"}};
  write_key_values(kv, dir / "f.cfg");
  CHECK(read_key_values(dir / "f.cfg") == kv);
  CHECK(format_double(0.1) == "0.1");
  CHECK(parse_double("k", format_double(1.0 / 3)) == 1.0 / 3);
  CHECK_THROWS_AS(parse_int("k", "1.5"), ConfigError);
  CHECK_THROWS_AS(parse_bool("k", "maybe"), ConfigError);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
