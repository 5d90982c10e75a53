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
#include "memefier/cli.hpp"
#include "memefier/config_file.hpp"
#include "memefier/dataset.hpp"
#include "memefier/digest.hpp"
#include "memefier/training.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using memefier::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("memefier_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

const char* kQuickConfig =
    "# small model for tests\n"
    "model.d_model = 8\n"
    "model.n_heads = 2\n"
    "model.ff_dim = 16\n"
    "model.decoder_dim = 8\n"
    "model.decoder_heads = 2\n"
    "model.decoder_ff = 8\n"
    "train.epochs = 2\n"
    "train.batch_size = 8\n";

}  // namespace

TEST_CASE("usage errors") {
  CHECK(call({}).code == memefier::cli::kUsageError);
  CHECK(call({"frobnicate"}).code == memefier::cli::kUsageError);
  CHECK(call({"synth"}).code == memefier::cli::kUsageError);
  CHECK(call({"synth", "--out", "x", "--n", "many"}).code == memefier::cli::kUsageError);
  const auto help = call({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("synth") != std::string::npos);
}

TEST_CASE("synth is deterministic and refuses to overwrite") {
  const auto dir = scratch("synth");
  REQUIRE(call({"synth", "--n", "64", "--seed", "7", "--out", (dir / "a").string()}).code == 0);
  REQUIRE(call({"synth", "--n", "64", "--seed", "7", "--out", (dir / "b").string()}).code == 0);
  CHECK(memefier::file_sha256(dir / "a" / "manifest.txt") == memefier::file_sha256(dir / "b" / "manifest.txt"));
  CHECK(memefier::file_sha256(dir / "a" / "config.cfg") == memefier::file_sha256(dir / "b" / "config.cfg"));
  const auto m = memefier::read_manifest(dir / "a" / "manifest.txt");
  CHECK(m.samples.size() == 64);
  const auto cfg = memefier::read_key_values(dir / "a" / "config.cfg");
  CHECK(cfg.at("seed") == "7");
  CHECK(cfg.at("data.seed") == "7");
  CHECK(cfg.at("model.seed") == "7");

  const auto again = call({"synth", "--n", "64", "--seed", "7", "--out", (dir / "a").string()});
  CHECK(again.code == memefier::cli::kRefuseOverwrite);
  CHECK(again.err.find("--force") != std::string::npos);
  CHECK(call({"synth", "--n", "64", "--seed", "8", "--force", "--out", (dir / "a").string()}).code == 0);
  CHECK(memefier::file_sha256(dir / "a" / "manifest.txt") != memefier::file_sha256(dir / "b" / "manifest.txt"));
}

TEST_CASE("config validation happens before any work") {
  const auto dir = scratch("config");
  write_text(dir / "bad_key.cfg", "model.d_modle = 8\n");
  write_text(dir / "bad_prefix.cfg", "optimizer = adam\n");
  write_text(dir / "bad_value.cfg", "train.epochs = 0\n");
  write_text(dir / "bad_heads.cfg", "model.d_model = 10\nmodel.n_heads = 4\n");
  write_text(dir / "bad_data.cfg", "data.n = 2\n");
  write_text(dir / "bad_line.cfg", "just words\n");
  for (const char* f : {"bad_key.cfg", "bad_prefix.cfg", "bad_value.cfg", "bad_heads.cfg", "bad_data.cfg", "bad_line.cfg"}) {
    INFO(f);
    const auto r = call({"synth", "--config", (dir / f).string(), "--out", (dir / "out").string()});
    CHECK(r.code == memefier::cli::kConfigError);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  }
  CHECK_FALSE(fs::exists(dir / "out"));
  CHECK(call({"synth", "--config", (dir / "absent.cfg").string(), "--out", (dir / "out").string()}).code ==
        memefier::cli::kMissingFile);
}

TEST_CASE("missing and invalid inputs") {
  const auto dir = scratch("missing");
  CHECK(call({"train", "--manifest", (dir / "none.txt").string(), "--out", (dir / "o").string()}).code ==
        memefier::cli::kMissingFile);
  CHECK(call({"eval", "--checkpoint", (dir / "none.ckpt").string(), "--manifest", "x", "--out", "o"}).code ==
        memefier::cli::kMissingFile);
  CHECK(call({"report", "--in", (dir / "nowhere").string()}).code == memefier::cli::kMissingFile);
  write_text(dir / "junk.txt", "not a manifest\n");
  CHECK(call({"train", "--manifest", (dir / "junk.txt").string(), "--out", (dir / "o").string()}).code ==
        memefier::cli::kInvalidInput);
  write_text(dir / "junk.ckpt", "nope");
  CHECK(call({"inspect", "--checkpoint", (dir / "junk.ckpt").string()}).code == memefier::cli::kInvalidInput);
}

TEST_CASE("train, eval, inspect and report end to end") {
  const auto dir = scratch("pipeline");
  write_text(dir / "quick.cfg", kQuickConfig);
  const std::string cfg = (dir / "quick.cfg").string();
  REQUIRE(call({"synth", "--n", "40", "--seed", "3", "--out", (dir / "data").string()}).code == 0);
  const std::string manifest = (dir / "data" / "manifest.txt").string();

  const auto tr = call({"train", "--config", cfg, "--manifest", manifest, "--out", (dir / "run").string()});
  REQUIRE(tr.code == 0);
  CHECK(tr.err.find("epoch 2/2") != std::string::npos);
  for (const char* f : {"final.ckpt", "best.ckpt", "history.txt", "metrics.best.txt", "config.cfg"}) {
    CHECK(fs::exists(dir / "run" / f));
  }
  const auto echoed = memefier::read_key_values(dir / "run" / "config.cfg");
  CHECK(echoed.at("train.epochs") == "2");
  CHECK(echoed.at("model.d_model") == "8");

  CHECK(call({"train", "--config", cfg, "--manifest", manifest, "--out", (dir / "run").string()}).code ==
        memefier::cli::kRefuseOverwrite);

  const auto ev = call({"eval", "--checkpoint", (dir / "run" / "final.ckpt").string(), "--manifest", manifest,
                        "--split", "val", "--out", (dir / "run").string()});
  REQUIRE(ev.code == 0);
  const auto metrics = memefier::MetricsReport::from_key_values(memefier::read_key_values(dir / "run" / "metrics.val.txt"));
  CHECK(metrics.tasks.count("hate") == 1);
  CHECK(call({"eval", "--checkpoint", (dir / "run" / "final.ckpt").string(), "--manifest", manifest, "--split",
              "holdout", "--out", (dir / "run").string()})
            .code == memefier::cli::kUsageError);

  const auto ins = call({"inspect", "--checkpoint", (dir / "run" / "best.ckpt").string(), "--manifest", manifest,
                         "--ids", "syn-000000,syn-000001"});
  REQUIRE(ins.code == 0);
  const auto model = memefier::read_checkpoint(dir / "run" / "best.ckpt");
  CHECK(ins.out.find("parameters " + std::to_string(model.count_parameters().total)) != std::string::npos);
  CHECK(ins.out.find("syn-000001") != std::string::npos);
  CHECK(ins.out.find("caption:") != std::string::npos);
  CHECK(call({"inspect", "--checkpoint", (dir / "run" / "best.ckpt").string(), "--manifest", manifest, "--ids",
              "nobody"})
            .code == memefier::cli::kInvalidInput);

  const auto rep = call({"report", "--in", (dir / "run").string()});
  REQUIRE(rep.code == 0);
  CHECK(rep.out.find("metrics.val.txt") != std::string::npos);
  CHECK(rep.out.find("metrics.best.txt") != std::string::npos);
}

TEST_CASE("eval on an overfit checkpoint reports perfect train accuracy") {
  const auto dir = scratch("overfit");
  write_text(dir / "over.cfg", "train.epochs = 200\ndata.train_fraction = 0.8\ndata.val_fraction = 0.1\n");
  const std::string cfg = (dir / "over.cfg").string();
  REQUIRE(call({"synth", "--config", cfg, "--n", "80", "--seed", "0", "--out", (dir / "data").string()}).code == 0);
  const std::string manifest = (dir / "data" / "manifest.txt").string();
  REQUIRE(call({"train", "--config", cfg, "--seed", "0", "--manifest", manifest, "--out", (dir / "run").string()}).code == 0);
  REQUIRE(call({"eval", "--checkpoint", (dir / "run" / "final.ckpt").string(), "--manifest", manifest, "--split",
                "train", "--out", (dir / "run").string()})
              .code == 0);
  const auto m = memefier::MetricsReport::from_key_values(memefier::read_key_values(dir / "run" / "metrics.train.txt"));
  CHECK(m.sample_count == 64);
  CHECK(m.tasks.at("hate").accuracy == 1.0);
}

TEST_CASE("ablate and grid write caches that report renders") {
  const auto dir = scratch("ablate");
  write_text(dir / "quick.cfg", [] {
    std::string s = kQuickConfig;
    s.replace(s.find("train.epochs = 2"), 16, "train.epochs = 1");
    return s;
  }());
  const std::string cfg = (dir / "quick.cfg").string();
  REQUIRE(call({"synth", "--n", "40", "--seed", "1", "--out", (dir / "data").string()}).code == 0);
  const std::string manifest = (dir / "data" / "manifest.txt").string();

  REQUIRE(call({"ablate", "--config", cfg, "--manifest", manifest, "--out", (dir / "abl").string()}).code == 0);
  CHECK(call({"ablate", "--config", cfg, "--manifest", manifest, "--out", (dir / "abl").string()}).code ==
        memefier::cli::kRefuseOverwrite);
  const auto rep = call({"report", "--in", (dir / "abl").string()});
  REQUIRE(rep.code == 0);
  std::size_t rows = 0;
  for (const auto& label : memefier::ablation_row_labels()) {
    const auto at = rep.out.find("\n" + label + " ");
    CHECK(at != std::string::npos);
    rows += at != std::string::npos;
  }
  CHECK(rows == 5);
  CHECK(rep.out.find("- Fusion stage 1") < rep.out.find("- Fusion stage 2"));

  const auto first = call({"grid", "--manifest", manifest, "--out", (dir / "grid").string(), "--limit", "1"});
  REQUIRE(first.code == 0);
  const auto second = call({"grid", "--manifest", manifest, "--out", (dir / "grid").string(), "--limit", "1"});
  REQUIRE(second.code == 0);
  CHECK(first.out == second.out);
  std::size_t cached = 0;
  for (const auto& e : fs::directory_iterator(dir / "grid" / "cache")) cached += e.path().extension() == ".json";
  CHECK(cached == 1);
  const auto grid_rep = call({"report", "--in", (dir / "grid").string()});
  REQUIRE(grid_rep.code == 0);
  CHECK(grid_rep.out.find("Grid search ranking") != std::string::npos);
  CHECK(grid_rep.out.find(" ok") != std::string::npos);
}

TEST_CASE("log verbosity comes from the environment") {
  const auto dir = scratch("log");
  setenv("MEMEFIER_LOG", "warn", 1);
  const auto quiet = call({"synth", "--n", "8", "--out", (dir / "a").string()});
  unsetenv("MEMEFIER_LOG");
  const auto loud = call({"synth", "--n", "8", "--out", (dir / "b").string()});
  CHECK(quiet.code == 0);
  CHECK(loud.code == 0);
  CHECK(quiet.err.empty());
  CHECK(loud.err.find("[info]") != std::string::npos);
}
