#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "vlslice/embedding_store.hpp"
#include "vlslice/random.hpp"

// Seeded synthetic corpora for demos and end-to-end tests.
//
// Axis 0 is the "subject" direction the baseline caption points at, axis 1
// a concept direction the augmented caption leans towards. Subject images
// sit near axis 0 with a uniform concept coordinate and a group prototype
// (so the clustering has structure to find); distractors are mostly
// orthogonal to axis 0.

namespace vlslice::synthetic {

struct Options {
  std::size_t subjects = 1000;
  std::size_t distractors = 1000;
  std::size_t dim = 32;
  std::size_t groups = 12;
  double concept_spread = 0.6;   // concept coordinate ~ U(-spread, spread)
  double group_weight = 0.5;
  double noise = 0.08;
  double augment_weight = 0.8;   // augmented caption = e0 + w * e1
  std::uint64_t seed = 7;
};

struct Dataset {
  Corpus corpus;
  std::vector<std::string> subject_ids;
  std::map<std::string, Embedding> captions;  // text-encoder fixture
  Embedding subject_direction;
  Embedding concept_direction;
  std::string baseline = "A photo of a person";
  std::string augmented = "A photo of a CEO";
  std::string concept_text = "suits";
};

inline Embedding axis(std::size_t dim, std::size_t i) {
  Embedding v(dim, 0.0f);
  v[i] = 1.0f;
  return v;
}

inline Dataset generate(const Options& opt) {
  Rng rng(opt.seed);
  const std::size_t dim = opt.dim;
  Dataset ds;
  ds.subject_direction = axis(dim, 0);
  ds.concept_direction = axis(dim, 1);

  std::vector<std::vector<double>> prototypes(opt.groups, std::vector<double>(dim, 0.0));
  for (auto& p : prototypes) {
    double sq = 0.0;
    for (std::size_t d = 2; d < dim; ++d) {
      p[d] = standard_normal(rng);
      sq += p[d] * p[d];
    }
    for (auto& x : p) x /= std::sqrt(sq);
  }

  std::vector<std::string> ids;
  std::vector<float> raw;
  raw.reserve((opt.subjects + opt.distractors) * dim);
  auto push = [&](const std::vector<double>& v, std::string id) {
    for (double x : v) raw.push_back(static_cast<float>(x));
    ids.push_back(std::move(id));
  };

  for (std::size_t i = 0; i < opt.subjects; ++i) {
    std::vector<double> v(dim, 0.0);
    const auto& proto = prototypes[opt.groups ? uniform_index(rng, opt.groups) : 0];
    v[0] = 1.0;
    v[1] = uniform_real(rng, -opt.concept_spread, opt.concept_spread);
    for (std::size_t d = 2; d < dim; ++d) v[d] = opt.group_weight * proto[d] + opt.noise * standard_normal(rng);
    char buf[32];
    std::snprintf(buf, sizeof buf, "subj_%05zu", i);
    ds.subject_ids.emplace_back(buf);
    push(v, buf);
  }
  for (std::size_t i = 0; i < opt.distractors; ++i) {
    std::vector<double> v(dim, 0.0);
    double sq = 0.0;
    for (std::size_t d = 1; d < dim; ++d) {
      v[d] = standard_normal(rng);
      sq += v[d] * v[d];
    }
    const double scale = 1.0 / std::sqrt(sq);
    for (std::size_t d = 1; d < dim; ++d) v[d] *= scale;
    v[0] = uniform_real(rng, -0.2, 0.2);
    char buf[32];
    std::snprintf(buf, sizeof buf, "dist_%05zu", i);
    push(v, buf);
  }

  ds.corpus.records.reserve(ids.size());
  for (const auto& id : ids) ds.corpus.records.push_back({id, "synthetic://" + id + ".jpg", {}});
  ds.corpus.matrix = EmbeddingMatrix::from_raw(std::move(ids), dim, std::move(raw));

  Embedding augmented(dim, 0.0f);
  augmented[0] = 1.0f;
  augmented[1] = static_cast<float>(opt.augment_weight);
  ds.captions[ds.baseline] = ds.subject_direction;
  ds.captions[ds.augmented] = normalized(augmented);
  ds.captions[ds.concept_text] = ds.concept_direction;
  return ds;
}

}  // namespace vlslice::synthetic
