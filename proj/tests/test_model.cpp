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
#include "memefier/digest.hpp"
#include "memefier/model.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace memefier;
using Md = ad::Matrix<double>;

namespace {

EmbeddedSample make_sample(const ModelConfig& c, int n_g, int n_x, int n_p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  auto random = [&](int r, int k) {
    FloatMatrix m(r, k);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  EmbeddedSample s;
  s.id = "s" + std::to_string(seed);
  s.image_global = random(1, c.d_img);
  s.image_patches = random(n_g, c.d_img);
  s.text_global = random(1, c.d_txt);
  s.text_tokens = random(n_x, c.d_txt);
  for (int p = 0; p < n_p; ++p) {
    s.external_codes.push_back(static_cast<std::int32_t>(rng() % 2));
    s.external_codes.push_back(static_cast<std::int32_t>(rng() % 7));
    s.external_codes.push_back(static_cast<std::int32_t>(rng() % 9));
  }
  s.caption_ids = {Vocabulary::kBos, 4, 5, Vocabulary::kEos};
  for (const auto& h : c.heads) {
    s.labels[h.task] = h.kind == HeadKind::kMultilabel ? std::vector<std::int32_t>(static_cast<std::size_t>(h.classes), 1)
                                                       : std::vector<std::int32_t>{0};
  }
  return s;
}

ModelConfig small_config() {
  ModelConfig c;
  c.d_model = 8;
  c.d_img = 8;
  c.d_txt = 5;
  c.n_heads = 2;
  c.ff_dim = 16;
  c.decoder_dim = 8;
  c.decoder_heads = 2;
  c.decoder_ff = 8;
  c.caption_vocab_size = 8;
  c.caption_max_len = 6;
  c.max_positions = 40;
  return c;
}

Md random_matrix(std::mt19937_64& rng, int r, int c) {
  std::uniform_real_distribution<double> u(-1, 1);
  Md m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST_CASE("project_modalities: identity, bias, affine oracle") {
  auto c = small_config();
  MemeFier<double> model(c);
  const auto s = make_sample(c, 2, 3, 0, 1);
  model.parameters().value("proj.image_token.weight") = Md::Identity(8, 8);
  model.parameters().value("proj.image_token.bias").setZero();
  {
    ad::Tape<double> tape;
    const auto p = model.project_modalities(tape, s);
    CHECK((tape.value(p.image_tokens) - s.image_patches.cast<double>()).cwiseAbs().maxCoeff() == 0.0);
  }
  {
    auto zero = s;
    zero.text_tokens.setZero();
    ad::Tape<double> tape;
    const auto p = model.project_modalities(tape, zero);
    const Md bias = model.parameters().value("proj.text_token.bias");
    for (int r = 0; r < 3; ++r) CHECK(tape.value(p.text_tokens).row(r) == bias);
  }
  {
    auto c2 = c;
    c2.d_txt = 3;
    c2.d_model = 2;
    c2.n_heads = 1;
    c2.decoder_dim = 2;
    c2.decoder_heads = 1;
    MemeFier<double> m2(c2);
    auto x = make_sample(c2, 1, 2, 0, 2);
    ad::Tape<double> tape;
    const auto p = m2.project_modalities(tape, x);
    const Md& W = m2.parameters().value("proj.text_token.weight");
    const Md& b = m2.parameters().value("proj.text_token.bias");
    for (int r = 0; r < 2; ++r) {
      for (int o = 0; o < 2; ++o) {
        double acc = b(0, o);
        for (int k = 0; k < 3; ++k) acc += static_cast<double>(x.text_tokens(r, k)) * W(o, k);
        CHECK(tape.value(p.text_tokens)(r, o) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
  auto bad = s;
  bad.text_tokens = FloatMatrix::Zero(3, 4);
  ad::Tape<double> tape;
  CHECK_THROWS(model.project_modalities(tape, bad));
}

TEST_CASE("fuse_stage1 arithmetic, identities and bilinearity") {
  MemeFier<double> model(small_config());
  ad::Tape<double> tape;
  Projections p;
  Md img(1, 3), tg(1, 3);
  img << 1, 2, 3;
  tg << 0.5, -1, 2;
  p.image_tokens = tape.constant(img);
  p.text_global = tape.constant(tg);
  p.text_tokens = tape.constant(Md::Ones(2, 3));
  p.image_global = tape.constant(Md::Zero(1, 3));
  const auto f = model.fuse_stage1(tape, p);
  Md expected(1, 3);
  expected << 0.5, -2, 6;
  CHECK(tape.value(f.image) == expected);
  CHECK(tape.value(f.text).isZero(0));

  std::mt19937_64 rng(4);
  const Md tokens = random_matrix(rng, 4, 3);
  p.image_tokens = tape.constant(tokens);
  p.text_global = tape.constant(Md::Ones(1, 3));
  CHECK(tape.value(model.fuse_stage1(tape, p).image) == tokens);

  const Md glob = random_matrix(rng, 1, 3);
  p.text_global = tape.constant(glob);
  const Md base = tape.value(model.fuse_stage1(tape, p).image);
  p.text_global = tape.constant(glob * 2.5);
  const Md scaled = tape.value(model.fuse_stage1(tape, p).image);
  CHECK((scaled - 2.5 * base).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("embed_external lookups") {
  MemeFier<double> model(small_config());
  ad::Tape<double> tape;
  CHECK(tape.value(model.embed_external(tape, std::vector<std::int32_t>{})).rows() == 0);
  const std::vector<std::int32_t> two{1, 0, 8, 1, 6, 8};
  const Md rows = tape.value(model.embed_external(tape, two));
  REQUIRE(rows.rows() == 6);
  CHECK(rows.row(2) == rows.row(5));
  CHECK(rows.row(0) == rows.row(3));
  const Md& table = model.parameters().value("ext.embedding");
  CHECK(rows.row(0) == table.row(1));
  CHECK(rows.row(1) == table.row(2 + 0));
  CHECK(rows.row(4) == table.row(2 + 6));
  CHECK(rows.row(5) == table.row(2 + 7 + 8));
  CHECK_THROWS(model.embed_external(tape, std::vector<std::int32_t>{2, 0, 0}));
  CHECK_THROWS(model.embed_external(tape, std::vector<std::int32_t>{0, 0}));
}

TEST_CASE("encode length, attention normalization, pad invariance") {
  const auto c = small_config();
  MemeFier<double> model(c);
  const auto s = make_sample(c, 4, 3, 0, 5);
  AttentionTrace<double> trace;
  ad::Tape<double> tape;
  ForwardOptions<double> opt;
  opt.trace = &trace;
  const auto vars = model.forward(tape, s, opt);
  CHECK(tape.value(vars.sequence.output).rows() == 8);
  CHECK(tape.value(vars.sequence.output).cols() == c.d_model);
  REQUIRE(trace.encoder_self.size() == static_cast<std::size_t>(c.n_heads * c.n_layers));
  for (const auto& a : trace.encoder_self) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) CHECK(std::abs(a.row(r).sum() - 1.0) < 1e-5);
  }

  const auto plain = model.predict(s);
  for (std::size_t pad : {9u, 12u, 20u}) {
    ad::Tape<double> t2;
    AttentionTrace<double> tr;
    ForwardOptions<double> o2;
    o2.pad_to = pad;
    o2.trace = &tr;
    const auto v2 = model.forward(t2, s, o2);
    CHECK(v2.sequence.length() == pad);
    const Md r = t2.value(v2.r_cls);
    CHECK((r - plain.r_cls).norm() / plain.r_cls.norm() < 1e-5);
    for (const auto& a : tr.encoder_self) {
      for (Eigen::Index q = 0; q < a.rows(); ++q) {
        CHECK(std::abs(a.row(q).sum() - 1.0) < 1e-5);
        CHECK(a.row(q).tail(static_cast<Eigen::Index>(pad) - 8).isZero(0));
      }
    }
  }
  ad::Tape<double> t3;
  ForwardOptions<double> o3;
  o3.pad_to = static_cast<std::size_t>(c.max_positions) + 1;
  CHECK_THROWS(model.forward(t3, s, o3));
}

TEST_CASE("classify heads") {
  auto c = small_config();
  c.heads = {parse_head("hate:binary"), parse_head("mood:multiclass:3"), parse_head("tags:multilabel:4")};
  MemeFier<double> model(c);
  for (auto& p : model.parameters()) {
    if (p.name.rfind("head.", 0) == 0) p.value.setZero();
  }
  const auto out = model.predict(make_sample(c, 2, 2, 1, 3));
  CHECK(out.head_scores.at("hate").probabilities(0, 0) == 0.5);
  for (int k = 0; k < 3; ++k) CHECK(out.head_scores.at("mood").probabilities(0, k) == doctest::Approx(1.0 / 3));
  CHECK(out.head_scores.at("tags").probabilities.cols() == 4);

  MemeFier<double> fresh(c);
  std::mt19937_64 rng(8);
  ad::Tape<double> tape;
  const Md r = random_matrix(rng, 1, c.d_model);
  const auto logits = fresh.classify(tape, tape.constant(r));
  const Md& W = fresh.parameters().value("head.hate.weight");
  const Md& b = fresh.parameters().value("head.hate.bias");
  double z = b(0, 0);
  for (int k = 0; k < c.d_model; ++k) z += W(0, k) * r(0, k);
  CHECK(tape.value(logits.at("hate"))(0, 0) == doctest::Approx(z).epsilon(1e-12));

  const auto mc = fresh.predict(make_sample(c, 2, 2, 0, 4)).head_scores.at("mood").probabilities;
  CHECK(std::abs(mc.sum() - 1.0) < 1e-5);
}

TEST_CASE("caption decoder structure") {
  const auto c = small_config();
  MemeFier<double> model(c);
  auto s = make_sample(c, 3, 2, 1, 6);
  s.caption_ids = {1, 4, 5, 6, 2};
  AttentionTrace<double> trace;
  const auto out = model.predict(s, &trace);
  REQUIRE(out.caption_logits);
  CHECK(out.caption_logits->rows() == 4);
  CHECK(out.caption_logits->cols() == c.caption_vocab_size);
  REQUIRE(trace.decoder_cross.size() == static_cast<std::size_t>(c.decoder_heads));
  for (const auto& a : trace.decoder_cross) {
    CHECK(a.rows() == 4);
    CHECK(a.cols() == 3);  // n_g image positions only
  }
  for (const auto& a : trace.decoder_self) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (Eigen::Index k = r + 1; k < a.cols(); ++k) CHECK(a(r, k) == 0.0);
    }
  }

  // Permuting future targets leaves earlier steps untouched.
  auto t = s;
  t.caption_ids = {1, 4, 6, 5, 2};
  const auto other = model.predict(t);
  CHECK(other.caption_logits->row(0) == out.caption_logits->row(0));
  CHECK(other.caption_logits->row(1) == out.caption_logits->row(1));
  CHECK(other.caption_logits->row(2) != out.caption_logits->row(2));

  // Cut the cross-attention path: logits stop depending on the image.
  model.parameters().value("dec.layers.0.cross_attn.output.weight").setZero();
  model.parameters().value("dec.layers.0.cross_attn.output.bias").setZero();
  ad::Tape<double> tape;
  std::mt19937_64 rng(2);
  const std::vector<std::int32_t> prefix{1, 4, 5};
  const Md a = tape.value(model.decode_caption(tape, tape.constant(random_matrix(rng, 3, c.d_model)), prefix));
  const Md b = tape.value(model.decode_caption(tape, tape.constant(random_matrix(rng, 5, c.d_model)), prefix));
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  const std::vector<std::int32_t> too_long(static_cast<std::size_t>(c.caption_max_len) + 1, 4);
  std::vector<std::int32_t> framed = too_long;
  framed[0] = 1;
  CHECK_THROWS(model.decode_caption(tape, tape.constant(Md::Zero(3, c.d_model)), framed));
  CHECK_THROWS(model.decode_caption(tape, tape.constant(Md::Zero(3, c.d_model)), std::vector<std::int32_t>{4}));

  const auto greedy = model.greedy_caption(s);
  CHECK(greedy.front() == Vocabulary::kBos);
  CHECK(greedy.size() <= static_cast<std::size_t>(c.caption_max_len));
}

TEST_CASE("combined_loss arithmetic") {
  const std::vector<HeadSpec> heads{parse_head("hate:binary")};
  ad::Tape<double> tape;
  // softplus(-x) = 0.5 and log(1 + 4 e^a) = 1 pick the two parts exactly.
  const double x = -std::log(std::exp(0.5) - 1.0);
  const double a = std::log((std::exp(1.0) - 1.0) / 4.0);
  Md cap(1, 5);
  cap << a, a, a, a, 0.0;
  const std::map<std::string, ad::Var> logits{{"hate", tape.constant(Md::Constant(1, 1, x))}};
  const std::map<std::string, std::vector<std::int32_t>> labels{{"hate", {1}}};
  const std::vector<std::int32_t> ids{1, 4};
  const auto l = combined_loss<double>(tape, heads, logits, labels, tape.constant(cap), ids, 0.2);
  CHECK(tape.value(l.task)(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(tape.value(*l.caption)(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(tape.value(l.total)(0, 0) == doctest::Approx(0.7).epsilon(1e-14));

  const auto zero = combined_loss<double>(tape, heads, logits, labels, tape.constant(cap), ids, 0.0);
  CHECK(tape.value(zero.total)(0, 0) == tape.value(zero.task)(0, 0));

  const std::map<std::string, ad::Var> sure{{"hate", tape.constant(Md::Constant(1, 1, 40.0))}};
  const auto perfect = combined_loss<double>(tape, heads, sure, labels, std::nullopt, ids, 0.2);
  CHECK(tape.value(perfect.task)(0, 0) < 1e-6);

  CHECK_THROWS(combined_loss<double>(tape, heads, logits, labels, std::nullopt, ids, -0.1));

  // PAD targets are ignored in the caption average.
  Md two(2, 5);
  two << a, a, a, a, 0.0, 5.0, -3.0, 1.0, 2.0, 0.5;
  const std::vector<std::int32_t> padded{1, 4, Vocabulary::kPad};
  const auto masked = combined_loss<double>(tape, heads, logits, labels, tape.constant(two), padded, 0.8);
  CHECK(tape.value(*masked.caption)(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("forward ablation structure") {
  auto c = small_config();
  const auto s = make_sample(c, 3, 2, 2, 7);
  MemeFier<double> full(c);
  CHECK(full.predict(s).sequence_length == 1 + 3 + 2 + 6);
  CHECK(full.predict(s).fused_image_features.rows() == 3);

  auto ne = c;
  ne.ablations.no_external = true;
  MemeFier<double> no_ext(ne);
  CHECK(no_ext.predict(s).sequence_length == 1 + 3 + 2);
  CHECK_FALSE(no_ext.parameters().find("ext.embedding"));

  auto nc = c;
  nc.ablations.no_caption = true;
  CHECK_THROWS_AS(MemeFier<double>{nc}, ConfigError);
  nc.alpha = 0.0;
  MemeFier<double> no_cap(nc);
  CHECK_FALSE(no_cap.predict(s).caption_logits);
  CHECK(no_cap.count_parameters().per_module.count("dec") == 0);

  auto n1 = c;
  n1.ablations.no_stage1 = true;
  MemeFier<double> no_s1(n1);
  {
    ad::Tape<double> tape;
    const auto vars = no_s1.forward(tape, s);
    const auto p = no_s1.project_modalities(tape, s);
    const Md& pos = no_s1.parameters().value("enc.position");
    const Md& seg = no_s1.parameters().value("enc.segment");
    const Md input = tape.value(vars.sequence.input);
    for (int i = 0; i < 3; ++i) {
      const Md raw = input.row(1 + i) - pos.row(1 + i) - seg.row(1);
      CHECK((raw - tape.value(p.image_tokens).row(i)).cwiseAbs().maxCoeff() < 1e-12);
    }
    for (int j = 0; j < 2; ++j) {
      const Md raw = input.row(4 + j) - pos.row(4 + j) - seg.row(2);
      CHECK((raw - tape.value(p.text_tokens).row(j)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  auto n2 = c;
  n2.ablations.no_stage2 = true;
  MemeFier<double> no_s2(n2);
  CHECK(no_s2.count_parameters().total < full.count_parameters().total);
  ad::Tape<double> tape;
  ForwardOptions<double> opt;
  opt.pad_to = 15;
  const auto vars = no_s2.forward(tape, s, opt);
  const Md input = tape.value(vars.sequence.input);
  Md mean = Md::Zero(1, c.d_model);
  for (int r = 0; r < 12; ++r) mean += input.row(r);
  mean /= 12.0;
  CHECK((tape.value(vars.r_cls) - mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(tape.value(vars.fused_image_features) == input.middleRows(1, 3));
}

TEST_CASE("count_parameters") {
  ParameterSet<double> one;
  one.add("w", Md::Zero(2, 3));
  one.add("b", Md::Zero(1, 2));
  CHECK(one.scalar_count() == 8);

  ModelConfig c;
  CHECK(MemeFier<float>(c).count_parameters().total == oracle::parameter_count(c));
  for (int mask = 0; mask < 16; ++mask) {
    auto a = small_config();
    a.heads = {parse_head("x:binary"), parse_head("y:multiclass:4"), parse_head("z:multilabel:3")};
    a.n_layers = 2;
    a.decoder_layers = 2;
    a.ablations = {(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0, (mask & 8) != 0};
    if (a.ablations.no_caption) a.alpha = 0;
    const auto report = MemeFier<float>(a).count_parameters();
    CHECK(report.total == oracle::parameter_count(a));
    std::size_t sum = 0;
    for (const auto& [name, n] : report.per_module) sum += n;
    CHECK(sum == report.total);
  }
  auto wide = c;
  wide.ff_dim *= 2;
  CHECK(MemeFier<float>(wide).count_parameters().total > MemeFier<float>(c).count_parameters().total);
}

TEST_CASE("gradient check on the tiny double model") {
  const auto c = gradcheck::tiny_config();
  MemeFier<double> model(c);
  gradcheck::perturb(model);
  const auto samples = gradcheck::tiny_samples(c);
  const auto errors = gradcheck::check(model, samples);
  CHECK(errors.size() == model.parameters().size());
  for (const auto& e : errors) {
    INFO(e.name);
    CHECK(e.relative_error < 1e-4);
  }
  MemeFier<double> initial(c);
  for (const auto& e : gradcheck::check(initial, samples, 1e-4)) {
    INFO(e.name);
    CHECK(e.relative_error < 1e-4);
  }
}

TEST_CASE("checkpoint round trip") {
  ModelConfig c = small_config();
  c.heads = {parse_head("hate:binary"), parse_head("mood:multiclass:3")};
  c.seed = 17;
  MemeFier<float> model(c);
  const std::string bytes = serialize_checkpoint(model);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.config() == model.config());
  REQUIRE(back.parameters().size() == model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    CHECK(back.parameters()[i].name == model.parameters()[i].name);
    CHECK(back.parameters()[i].value == model.parameters()[i].value);
  }
  CHECK(sha256_hex(serialize_checkpoint(back)) == sha256_hex(bytes));
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), CheckpointError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), CheckpointError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), CheckpointError);
}
