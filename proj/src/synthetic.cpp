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

#include "memefier/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace memefier {
namespace {

using Vec = Eigen::VectorXd;

Vec random_unit(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(d);
  do {
    for (int k = 0; k < d; ++k) v[k] = normal(rng);
  } while (v.norm() < 1e-8);
  return v / v.norm();
}

FloatMatrix noisy_rows(std::mt19937_64& rng, const Vec& center, int rows, double sigma) {
  std::normal_distribution<double> normal(0.0, sigma);
  FloatMatrix m(rows, center.size());
  for (int r = 0; r < rows; ++r) {
    for (Eigen::Index k = 0; k < center.size(); ++k) {
      m(r, k) = static_cast<float>(center[k] + normal(rng));
    }
  }
  return m;
}

FloatMatrix as_row(const Vec& v) {
  FloatMatrix m(1, v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) m(0, k) = static_cast<float>(v[k]);
  return m;
}

// Maps a coordinate of a random unit vector (std ~ 1/sqrt(d)) onto 8 bins.
int caption_bin(double coordinate, int d) {
  const double scaled = coordinate * std::sqrt(static_cast<double>(d));
  return std::clamp(static_cast<int>(std::floor((scaled + 2.0) * 2.0)), 0, 7);
}

}  // namespace

const std::array<std::string_view, 8>& synthetic_caption_alphabet() {
  static const std::array<std::string_view, 8> words = {
      "amber", "birch", "coral", "dune", "ember", "fjord", "grove", "harbor"};
  return words;
}

DatasetManifest generate_synthetic(const SyntheticOptions& o) {
  if (o.n < 4) throw std::invalid_argument("generate_synthetic: n must be >= 4");
  if (o.d < 4) throw std::invalid_argument("generate_synthetic: d must be >= 4");
  if (o.n_g < 1 || o.n_x < 1) throw std::invalid_argument("generate_synthetic: n_g, n_x must be >= 1");
  if (!(o.min_cosine > 0.0f && o.min_cosine <= o.max_cosine && o.max_cosine < 1.0f)) {
    throw std::invalid_argument("generate_synthetic: need 0 < min_cosine <= max_cosine < 1");
  }
  if (o.noise < 0.0f) throw std::invalid_argument("generate_synthetic: negative noise");
  DatasetManifest m;
  if (o.planted_attribute < 0 || o.planted_attribute >= kAttributesPerPerson ||
      o.planted_code < 0 || o.planted_code >= m.attribute_vocab_sizes[o.planted_attribute]) {
    throw std::invalid_argument("generate_synthetic: planted code outside attribute vocabulary");
  }
  if (!(o.train_fraction > 0.0 && o.val_fraction > 0.0 && o.train_fraction + o.val_fraction <= 1.0)) {
    throw std::invalid_argument("generate_synthetic: invalid split fractions");
  }

  std::mt19937_64 rng(o.seed);
  m.d_img = o.d;
  m.d_txt = o.d;

  std::vector<int> signs(static_cast<std::size_t>(o.n));
  for (int i = 0; i < o.n; ++i) signs[static_cast<std::size_t>(i)] = (i < (o.n + 1) / 2) ? 1 : -1;
  std::shuffle(signs.begin(), signs.end(), rng);

  const double sigma = o.noise / std::sqrt(static_cast<double>(o.d));
  std::uniform_real_distribution<double> cosine(o.min_cosine, o.max_cosine);
  std::uniform_int_distribution<int> persons(0, 2);
  const auto& alphabet = synthetic_caption_alphabet();

  std::vector<std::string> captions;
  captions.reserve(static_cast<std::size_t>(o.n));
  m.samples.reserve(static_cast<std::size_t>(o.n));
  for (int i = 0; i < o.n; ++i) {
    EmbeddedSample s;
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%06d", i);
    s.id = id;

    const int sign = signs[static_cast<std::size_t>(i)];
    const Vec z = random_unit(rng, o.d);
    Vec u = random_unit(rng, o.d);
    u -= u.dot(z) * z;
    if (u.norm() < 1e-8) u = random_unit(rng, o.d) - z;  // degenerate draw
    u.normalize();
    const double c = cosine(rng);
    const Vec w = sign * c * z + std::sqrt(1.0 - c * c) * u;

    s.image_global = as_row(z);
    s.text_global = as_row(w);
    s.image_patches = noisy_rows(rng, z, o.n_g, sigma);
    s.text_tokens = noisy_rows(rng, w, o.n_x, sigma);

    const int n_p = persons(rng);
    bool planted = false;
    for (int p = 0; p < n_p; ++p) {
      for (int a = 0; a < kAttributesPerPerson; ++a) {
        std::uniform_int_distribution<int> code(0, m.attribute_vocab_sizes[a] - 1);
        const int v = code(rng);
        s.external_codes.push_back(v);
        if (a == o.planted_attribute && v == o.planted_code) planted = true;
      }
    }
    s.labels[o.task] = {(sign > 0 && planted) ? 1 : 0};

    std::string caption;
    for (int k = 0; k < 3; ++k) {
      if (k) caption.push_back(' ');
      caption += alphabet[static_cast<std::size_t>(caption_bin(z[k], o.d))];
    }
    captions.push_back(std::move(caption));
    m.samples.push_back(std::move(s));
  }

  m.caption_vocab = build_caption_vocab(captions);
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    m.samples[i].caption_ids = m.caption_vocab.encode(captions[i], /*frame=*/true);
  }

  const auto n_train = static_cast<std::size_t>(std::floor(o.n * o.train_fraction));
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(o.n * o.val_fraction)));
  m.splits.resize(m.samples.size(), Split::kTest);
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    if (i < n_train) {
      m.splits[i] = Split::kTrain;
    } else if (i < n_train + n_val) {
      m.splits[i] = Split::kVal;
    }
  }
  m.validate();
  return m;
}

DatasetManifest generate_synthetic(int n, int d, int n_g, int n_x, std::uint64_t seed) {
  SyntheticOptions o;
  o.n = n;
  o.d = d;
  o.n_g = n_g;
  o.n_x = n_x;
  o.seed = seed;
  return generate_synthetic(o);
}

}  // namespace memefier
