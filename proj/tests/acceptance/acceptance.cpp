// Copyright 2026 The insectleaf Authors. All Rights Reserved.
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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../fixtures.hpp"
#include "insectleaf.hpp"

namespace {

using namespace insectleaf;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

std::vector<float> noise(std::size_t n, Rng& rng, double scale) {
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(scale * rng.normal());
  return x;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double rel_error(double a, double b, double floor) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor}); }

// ---------------------------------------------------------------------------

Outcome shape_contract() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(101);
  for (const auto kind : {train::FrontendKind::kMel, train::FrontendKind::kLeaf}) {
    train::ModelConfig mc;
    mc.frontend = kind;
    train::Model<float> model(mc, 7);
    std::size_t bad_shape = 0, bad_logits = 0;
    for (std::size_t batch = 0; batch < 10; ++batch) {
      nn::Tensor<float> input(10, 1, 64, 1500);
      for (std::size_t i = 0; i < 10; ++i) {
        const auto f = model.features(noise(220500, rng, rng.uniform(0.001, 0.5)));
        if (f.bands != 64 || f.frames != 1500 || !f.all_finite()) {
          ++bad_shape;
          continue;
        }
        std::copy(f.values.begin(), f.values.end(), input.sample(i).begin());
      }
      const auto y = model.backend().forward(input, nn::Mode::kEval);
      if (y.n != 10 || y.sample_size() != 32) ++bad_logits;
    }
    o.require(bad_shape == 0, std::to_string(bad_shape) + " " + std::string(train::to_string(kind)) + " maps not (64, 1500)");
    o.require(bad_logits == 0, std::string(train::to_string(kind)) + " backend did not return 32 logits");
  }
  const double s = seconds_since(t0);
  o.require(s < 60.0, "runtime " + num(s) + " s exceeds 60 s");
  o.note("100 chunks per frontend, (64, 1500) -> 32 logits in " + num(s, 3) + " s");
  return o;
}

Outcome parameter_audit() {
  Outcome o;
  train::ModelConfig mc;
  mc.frontend = train::FrontendKind::kLeaf;
  train::Model<float> model(mc, 1);
  const auto backend = model.backend().parameter_count(), total = model.parameter_count();
  o.require(backend == 26832, "backend count " + std::to_string(backend));
  o.require(total == 27280, "backend+leaf count " + std::to_string(total));
  const auto report = pipeline::parameter_report(model);
  o.require(report.find("trainable total: 27280") != std::string::npos, "report lacks the 27280 total");
  o.require(report.find("27344") != std::string::npos && report.find("difference 64") != std::string::npos, "report does not document the gap");
  std::cout << report;
  o.note("backend " + std::to_string(backend) + ", backend+leaf " + std::to_string(total) + ", gap 64 documented");
  return o;
}

struct LeafGradCase {
  std::vector<float> x;
  std::vector<double> weights;
  leaf::LeafConfig cfg;
  leaf::LeafParams<double> params;
};

LeafGradCase leaf_grad_case() {
  LeafGradCase g;
  Rng rng(11);
  g.x = noise(2048, rng, 0.3);
  g.cfg.chunk_samples = 2048;
  leaf::LeafInit init;
  init.n_filters = 8;
  g.params = leaf::init_leaf_params<double>(init);
  for (std::size_t i = 0; i < 8; ++i) {
    g.params.pcen.alpha[i] = 0.9;
    g.params.pcen.delta[i] = 1.5;
    g.params.pcen.root[i] = 1.7;
    g.params.pcen.smooth[i] = 0.1;
    g.params.bank.sigma[i] = std::min(g.params.bank.sigma[i], 40.0);
    g.params.pooling.width[i] = 0.3;
  }
  const auto geo = leaf::PoolGeometry::make(2048, 294, 147);
  g.weights.resize(8 * geo.frames);
  Rng w(12);
  for (auto& v : g.weights) v = w.normal();
  return g;
}

double leaf_objective(const leaf::LeafFrontend<double>& fe, const LeafGradCase& g, const leaf::LeafParams<double>& p) {
  const auto out = fe.forward(g.x, p);
  double s = 0.0;
  for (std::size_t i = 0; i < out.values.size(); ++i) s += out.values[i] * g.weights[i];
  return s;
}

template <typename T>
struct BackendLoss {
  nn::BackendSpec spec;
  nn::Tensor<double> x;
  std::vector<std::size_t> labels{0, 1, 2, 3};

  BackendLoss() {
    spec.in_bands = 16;
    spec.in_frames = 40;
    spec.n_classes = 5;
    x = nn::Tensor<double>(4, 1, 16, 40);
    Rng rng(7);
    for (auto& v : x.data) v = rng.normal();
  }

  template <typename U>
  nn::Tensor<U> input() const {
    nn::Tensor<U> t(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.data.size(); ++i) t.data[i] = static_cast<U>(x.data[i]);
    return t;
  }

  template <typename U>
  double loss(nn::Backend<U>& b) const {
    Rng drop(9);
    return nn::softmax_cross_entropy(b.forward(input<U>(), nn::Mode::kTrain, &drop), labels).loss;
  }
};

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto g = leaf_grad_case();
  const leaf::LeafFrontend<double> fe(g.cfg);

  // Analytic gradients in single precision.
  leaf::LeafFrontend<float> fe32(g.cfg);
  const auto p32 = g.params.cast<float>();
  leaf::LeafFrontend<float>::Cache cache;
  fe32.forward(g.x, p32, &cache);
  FeatureMapT<float> w(8, g.weights.size() / 8);
  for (std::size_t i = 0; i < g.weights.size(); ++i) w.values[i] = static_cast<float>(g.weights[i]);
  const auto an = fe32.backward(g.x, p32, cache, w);
  std::vector<std::vector<double>> analytic;
  std::vector<std::string> names;
  an.for_each_vector([&](const auto& name, const std::vector<float>& v) {
    analytic.emplace_back(v.begin(), v.end());
    names.emplace_back(name);
  });

  double worst_leaf = 0.0;
  std::set<std::string> classes;
  for (std::size_t vi = 0; vi < analytic.size(); ++vi) {
    for (std::size_t ch = 0; ch < 8; ++ch) {
      auto plus = g.params, minus = g.params;
      std::vector<std::vector<double>*> a, b;
      plus.for_each_vector([&](const auto&, std::vector<double>& v) { a.push_back(&v); });
      minus.for_each_vector([&](const auto&, std::vector<double>& v) { b.push_back(&v); });
      const double h = 1e-6 * std::max(1.0, std::abs((*a[vi])[ch]));
      (*a[vi])[ch] += h;
      (*b[vi])[ch] -= h;
      const double fd = (leaf_objective(fe, g, plus) - leaf_objective(fe, g, minus)) / (2.0 * h);
      const double err = rel_error(fd, analytic[vi][ch], 1e-8);
      worst_leaf = std::max(worst_leaf, err);
      if (err >= 1e-3) o.require(false, names[vi] + "[" + std::to_string(ch) + "] rel error " + num(err));
    }
    classes.insert(names[vi]);
  }
  o.require(classes.size() == 7, std::to_string(classes.size()) + " LEAF parameter classes checked, expected 7");

  BackendLoss<float> f;
  nn::Backend<double> ref(f.spec, 3);
  nn::Backend<float> model(f.spec, 3);
  {
    Rng drop(9);
    const auto y = model.forward(f.input<float>(), nn::Mode::kTrain, &drop);
    nn::Tensor<float> gy;
    nn::softmax_cross_entropy(y, f.labels, &gy);
    model.zero_grad();
    model.backward(gy, false);
  }
  double worst_backend = 0.0;
  std::size_t sampled = 0;
  auto rp = ref.parameters();
  auto mp = model.parameters();
  for (std::size_t pi = 0; pi < rp.size(); ++pi) {
    for (std::size_t k = 0; k < 10; ++k) {
      const std::size_t i = (k * 7919 + 13) % rp[pi]->size();
      const double v = rp[pi]->value[i], h = 1e-6;
      rp[pi]->value[i] = v + h;
      const double up = f.loss(ref);
      rp[pi]->value[i] = v - h;
      const double down = f.loss(ref);
      rp[pi]->value[i] = v;
      const double err = rel_error((up - down) / (2.0 * h), mp[pi]->grad[i], 1e-6);
      worst_backend = std::max(worst_backend, err);
      ++sampled;
      if (err >= 1e-3) o.require(false, rp[pi]->name + "[" + std::to_string(i) + "] rel error " + num(err));
    }
  }
  const double s = seconds_since(t0);
  o.require(s < 300.0, "runtime " + num(s) + " s exceeds 300 s");
  o.note("7 LEAF classes x 8 filters worst " + num(worst_leaf, 3) + ", " + std::to_string(sampled) + " backend weights worst " + num(worst_backend, 3) +
         " (float vs double FD), " + num(s, 3) + " s");
  return o;
}

Outcome mel_init_equivalence() {
  Outcome o;
  const auto p = leaf::init_leaf_params<double>();
  MelFilterbank bank(MelConfig{});
  double worst = 0.0;
  for (std::size_t n = 0; n < 64; ++n) {
    const double hz = p.bank.eta[n] * kCanonicalRate / (2.0 * M_PI);
    worst = std::max(worst, std::abs(hz - bank.center_hz(n)) / bank.center_hz(n));
  }
  o.require(worst <= 0.01, "center frequency off by " + num(100.0 * worst) + "%");
  Rng rng(7);
  const auto x = noise(220500, rng, 0.1);
  const auto env = leaf::LeafFrontend<double>().envelope(x, p);
  const auto mel = MelFrontend().power(x);
  std::vector<double> a(64), b(64);
  for (std::size_t c = 0; c < 64; ++c) {
    for (std::size_t q = 0; q < 1500; ++q) {
      a[c] += std::log(env.at(c, q) + 1e-6);
      b[c] += std::log(mel.at(c, q) + 1e-6);
    }
    a[c] /= 1500.0;
    b[c] /= 1500.0;
  }
  const double r = pearson(a, b);
  o.require(r > 0.9, "band-mean log-envelope correlation " + num(r));
  o.note("worst center offset " + num(100.0 * worst, 3) + "%, correlation " + num(r, 4));
  return o;
}

Outcome early_stopping_replay() {
  Outcome o;
  for (bool strict : {true, false}) {
    const auto mel = train::replay_early_stopping(fixtures::kMelValidationLosses, 8, strict);
    const auto leaf = train::replay_early_stopping(fixtures::kLeafValidationLosses, 8, strict);
    const std::string tag = strict ? "strict" : "non-strict";
    o.require(mel.best_epoch == 26 && mel.stop_epoch == 34,
              tag + " mel log gives (" + std::to_string(mel.best_epoch) + ", " + std::to_string(mel.stop_epoch) + ")");
    o.require(leaf.best_epoch == 30 && leaf.stop_epoch == 38,
              tag + " leaf log gives (" + std::to_string(leaf.best_epoch) + ", " + std::to_string(leaf.stop_epoch) + ")");
  }
  o.note("(26, 34) and (30, 38)");
  return o;
}

Outcome augmentation_contract() {
  Outcome o;
  AugmentPlan plan;
  plan.generations = 10;
  plan.ir_set = synthetic_impulse_responses();
  plan.seed = 4321;

  std::vector<ChunkRecord> originals;
  Rng rng(3);
  for (std::size_t i = 0; i < 6; ++i) {
    ChunkRecord r;
    r.samples = noise(4410, rng, 0.1);
    r.label_id = static_cast<int>(i % 3);
    r.species = "sp" + std::to_string(i % 3);
    r.split = Split::kTrain;
    r.lineage.source_id = "src" + std::to_string(i);
    originals.push_back(std::move(r));
  }
  const auto out = augment_training_set(originals, plan);
  o.require(out.records.size() == 11 * originals.size(), "corpus multiplier " + std::to_string(out.records.size()) + "/" + std::to_string(originals.size()));

  // SNR over 100 draws.
  const auto x = noise(22050, rng, 0.05);
  double worst_snr = 0.0;
  Rng pick(6);
  for (int t = 0; t < 100; ++t) {
    const double snr = pick.uniform(plan.snr_min_db, plan.snr_max_db);
    Rng nr(derive_seed(7, static_cast<std::uint64_t>(t)));
    const auto y = add_noise_snr(x, snr, nr);
    double ps = 0, pn = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      ps += static_cast<double>(x[i]) * x[i];
      pn += (static_cast<double>(y[i]) - x[i]) * (static_cast<double>(y[i]) - x[i]);
    }
    worst_snr = std::max(worst_snr, std::abs(10.0 * std::log10(ps / pn) - snr));
  }
  o.require(worst_snr <= 0.5, "SNR error " + num(worst_snr) + " dB");

  // Attenuation inside the masked band.
  const auto wn = noise(44100, rng, 0.2);
  double worst_att = 1e300;
  for (double center : {2000.0, 8000.0, 15000.0}) {
    const double fraction = 0.1, half = 0.5 * fraction * 22050.0;
    const auto y = frequency_mask(wn, kCanonicalRate, center, fraction);
    const auto px = power_spectrum<float>(wn), py = power_spectrum<float>(y);
    double in_x = 0, in_y = 0;
    for (std::size_t k = 0; k < px.size(); ++k) {
      const double f = static_cast<double>(k);  // 1 Hz bins on a 1 s signal
      if (f >= center - half + 1 && f <= center + half - 1) {
        in_x += px[k];
        in_y += py[k];
      }
    }
    worst_att = std::min(worst_att, 10.0 * std::log10(in_x / in_y));
  }
  o.require(worst_att >= 40.0, "masked-band attenuation " + num(worst_att) + " dB");

  const int n = 10000;
  int masks = 0, irs = 0;
  for (int i = 0; i < n; ++i) {
    const auto d = draw_augmentation(plan, derive_seed(plan.seed, static_cast<std::uint64_t>(i)));
    masks += d.mask;
    irs += d.ir_index >= 0;
  }
  const auto band = [n](double p) { return 3.0 * std::sqrt(p * (1.0 - p) / n); };
  const double mr = static_cast<double>(masks) / n, ir = static_cast<double>(irs) / n;
  o.require(std::abs(mr - 0.5) <= band(0.5), "mask rate " + num(mr));
  o.require(std::abs(ir - 0.7) <= band(0.7), "IR rate " + num(ir));
  o.note("11x exact, worst SNR error " + num(worst_snr, 3) + " dB, min attenuation " + num(worst_att, 3) + " dB, mask rate " + num(mr) + ", IR rate " +
         num(ir));
  return o;
}

Outcome untrained_loss() {
  Outcome o;
  const auto specs = default_species(32);
  std::vector<std::vector<float>> xs;
  std::vector<std::size_t> ys;
  train::MemoryExamples set;
  for (std::size_t k = 0; k < 32; ++k)
    for (std::uint64_t i = 0; i < 2; ++i) {
      auto clip = synth_clip(specs[k], 5.0, derive_seed(99, k, i));
      set.add(std::move(clip.samples), k);
    }
  const double target = std::log(32.0);
  for (const auto kind : {train::FrontendKind::kMel, train::FrontendKind::kLeaf}) {
    train::ModelConfig mc;
    mc.frontend = kind;
    train::Model<float> model(mc, 11);
    const auto r = train::evaluate_set(model, set, 14);
    o.require(std::abs(r.loss - target) <= 0.15 * target, std::string(train::to_string(kind)) + " initial loss " + num(r.loss));
    o.note(std::string(train::to_string(kind)) + " " + num(r.loss) + " vs ln 32 = " + num(target));
  }
  return o;
}

Outcome metrics_oracle() {
  Outcome o;
  const auto names = [](std::size_t c) {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < c; ++k) out.push_back("c" + std::to_string(k));
    return out;
  };
  eval::ConfusionMatrix fx(names(2));
  fx.at(0, 0) = 2;
  fx.at(1, 0) = 1;
  fx.at(1, 1) = 1;
  const auto m = eval::compute_metrics(fx);
  o.require(m.accuracy == 0.75 && std::abs(m.macro_precision - 5.0 / 6.0) < 1e-12 && std::abs(m.macro_recall - 0.75) < 1e-12 &&
                std::abs(m.macro_f1 - 11.0 / 15.0) < 1e-12,
            "2-class fixture gives " + num(m.accuracy) + "/" + num(m.macro_precision) + "/" + num(m.macro_recall) + "/" + num(m.macro_f1));

  Rng rng(2024);
  std::size_t failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 2 + rng.below(5), n = 1 + rng.below(40);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    eval::ConfusionMatrix cm(names(c));
    for (std::size_t i = 0; i < n; ++i) {
      std::pair<std::size_t, std::size_t> p{rng.below(c), rng.below(c)};
      if (rng.bernoulli(0.5)) p.second = p.first;
      pairs.push_back(p);
      ++cm.at(p.first, p.second);
    }
    std::size_t hits = 0;
    for (const auto& [t, p] : pairs) hits += t == p;
    double prec = 0, rec = 0, f1 = 0;
    for (std::size_t k = 0; k < c; ++k) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (const auto& [t, p] : pairs) {
        tp += t == k && p == k;
        fp += t != k && p == k;
        fn += t == k && p != k;
      }
      prec += (tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0) / static_cast<double>(c);
      rec += (tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0) / static_cast<double>(c);
      f1 += (tp ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0) / static_cast<double>(c);
    }
    const auto got = eval::compute_metrics(cm);
    const double acc = static_cast<double>(hits) / static_cast<double>(n);
    if (got.accuracy != acc || std::abs(got.macro_precision - prec) > 1e-9 || std::abs(got.macro_recall - rec) > 1e-9 ||
        std::abs(got.macro_f1 - f1) > 1e-9)
      ++failures;
  }
  o.require(failures == 0, std::to_string(failures) + " of 1000 random matrices disagree");
  o.note("fixture 0.75/0.8333/0.75/0.7333, 1000 random matrices agree");
  return o;
}

std::size_t brute_descents(const std::vector<double>& v) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) n += v[i + 1] < v[i];
  return n;
}

// ---------------------------------------------------------------------------

ExperimentConfig make_config(const Json& overrides) { return config_from_json(overrides); }

/// The default synthetic corpus run end to end; shared by the criteria that
/// inspect its artifacts.
struct EndToEnd {
  fs::path work;
  double seconds = 0.0;
  std::string error;
};

EndToEnd run_end_to_end(const fs::path& root, int jobs) {
  EndToEnd e2e;
  e2e.work = root / "e2e" / "work";
  fs::remove_all(root / "e2e");
  Json j = Json::object();
  j["data_root"] = (root / "e2e" / "data").string();
  j["work_dir"] = e2e.work.string();
  j["augment_generations"] = 0;
  j["max_epochs"] = 30;
  j["runs"] = 1;
  const auto t0 = Clock::now();
  try {
    const auto c = make_config(j);
    c.validate();
    pipeline::StageOptions opt;
    opt.jobs = jobs;
    opt.console = &std::cerr;
    pipeline::persist_config(c);
    pipeline::run_synth(c, opt);
    pipeline::run_all(c, opt);
  } catch (const std::exception& ex) {
    e2e.error = ex.what();
  }
  e2e.seconds = seconds_since(t0);
  return e2e;
}

double metric_from_text(const fs::path& path, const std::string& key) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + ": ", 0) == 0) return std::stod(line.substr(key.size() + 2));
  throw DataError("no '" + key + "' in " + path.string());
}

Outcome chunking_arithmetic(const EndToEnd* e2e) {
  Outcome o;
  const double durations[] = {3.0, 5.0, 6.25, 10.0};
  const std::size_t expected[] = {1, 4, 5, 8};
  for (int i = 0; i < 4; ++i) {
    AudioClip c;
    c.samples.assign(static_cast<std::size_t>(std::llround(durations[i] * kCanonicalRate)), 0.1f);
    c.source_id = "d" + std::to_string(i);
    const auto n = chunk(c).size();
    o.require(n == expected[i], num(durations[i]) + " s gives " + std::to_string(n) + " chunks");
  }
  if (!e2e || !e2e->error.empty()) {
    o.require(false, "no end-to-end corpus");
    return o;
  }
  const auto r = read_receipt(e2e->work, "chunk");
  const double mult = r.extra.at("chunk_multiplier").get<double>(), mean = r.extra.at("mean_duration_s").get<double>();
  o.require(mean >= 10.0, "mean duration " + num(mean) + " s");
  o.require(mult >= 7.0, "chunk multiplier " + num(mult));
  o.note("{3, 5, 6.25, 10} s -> {1, 4, 5, 8}; synthetic corpus " + num(mult) + "x at mean " + num(mean) + " s");
  return o;
}

Outcome end_to_end_learning(const EndToEnd* e2e) {
  Outcome o;
  if (!e2e || !e2e->error.empty()) {
    o.require(false, "end-to-end run failed: " + (e2e ? e2e->error : std::string("not run")));
    return o;
  }
  pipeline::Layout l(e2e->work);
  for (const auto kind : {train::FrontendKind::kMel, train::FrontendKind::kLeaf}) {
    const auto name = std::string(train::to_string(kind));
    const double acc = metric_from_text(l.report_dir(kind) / "metrics.txt", "accuracy");
    const auto curve = train::read_training_curve(l.report_dir(kind) / "training_curve.csv");
    o.require(acc >= 0.5, name + " test accuracy " + num(acc));
    o.require(!curve.empty() && curve.size() <= 30, name + " trained " + std::to_string(curve.size()) + " epochs");
    o.note(name + " test accuracy " + num(acc) + " after " + std::to_string(curve.size()) + " epochs");
  }
  o.require(e2e->seconds < 1800.0, "runtime " + num(e2e->seconds) + " s");
  o.note("synth + all in " + num(e2e->seconds / 60.0, 3) + " min");
  return o;
}

Outcome drift_report(const EndToEnd* e2e) {
  Outcome o;
  Rng rng(77);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(64);
    std::vector<double> init(n), trained(n);
    std::iota(init.begin(), init.end(), 100.0);
    trained = init;
    rng.shuffle(trained);
    const auto r = eval::filter_drift(init, trained);
    if (r.ordering_violations != brute_descents(trained)) ++mismatches;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " of 200 permutations miscounted");
  if (!e2e || !e2e->error.empty()) {
    o.require(false, "no end-to-end LEAF run");
    return o;
  }
  const auto path = pipeline::Layout(e2e->work).report_dir(train::FrontendKind::kLeaf) / "filter_drift.csv";
  eval::FilterDriftReport r;
  try {
    r = eval::read_filter_drift(path);
  } catch (const std::exception& ex) {
    o.require(false, std::string("drift report does not load: ") + ex.what());
    return o;
  }
  o.require(r.rows.size() == 64, std::to_string(r.rows.size()) + " drift rows");
  double worst = 0.0;
  std::vector<double> trained;
  for (const auto& d : r.rows) {
    const auto rel = [](double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-12); };
    worst = std::max({worst, rel(d.init_mel, hz_to_mel(d.init_hz)), rel(d.trained_mel, hz_to_mel(d.trained_hz)),
                      std::abs(d.delta_mel - (d.trained_mel - d.init_mel)) / std::max(std::abs(d.trained_mel), 1e-12),
                      std::abs(d.delta_hz - (d.trained_hz - d.init_hz)) / std::max(std::abs(d.trained_hz), 1e-12)});
    trained.push_back(d.trained_hz);
  }
  o.require(worst <= 1e-6, "mel/Hz columns inconsistent by " + num(worst));
  o.require(r.ordering_violations == brute_descents(trained), "ordering violations on the trained bank miscounted");
  o.note("64 filters, worst mel/Hz mismatch " + num(worst, 3) + ", " + std::to_string(r.ordering_violations) + " ordering violations, 200 permutations agree");
  return o;
}

std::map<std::string, std::string> report_files(const fs::path& work) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(work / "reports")) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), work).string()] = ss.str();
  }
  return out;
}

Outcome determinism(const fs::path& root) {
  Outcome o;
  const auto base = root / "determinism";
  fs::remove_all(base);
  Json j = Json::object();
  j["data_root"] = (base / "data").string();
  j["synth_classes"] = 3;
  j["synth_files_per_class"] = 4;
  j["synth_min_duration_s"] = 5.0;
  j["synth_max_duration_s"] = 6.0;
  j["augment_generations"] = 1;
  j["max_epochs"] = 2;
  j["patience"] = 1;
  j["runs"] = 1;
  std::vector<std::map<std::string, std::string>> outputs;
  try {
    for (const char* tag : {"a", "b"}) {
      j["work_dir"] = (base / tag).string();
      const auto c = make_config(j);
      c.validate();
      pipeline::StageOptions opt;
      if (outputs.empty()) pipeline::run_synth(c, opt);
      pipeline::run_all(c, opt);
      outputs.push_back(report_files(base / tag));
    }
  } catch (const std::exception& ex) {
    o.require(false, std::string("tiny run failed: ") + ex.what());
    return o;
  }
  std::size_t csvs = 0;
  for (const auto& [name, bytes] : outputs[0]) {
    const auto it = outputs[1].find(name);
    if (it == outputs[1].end() || it->second != bytes) o.require(false, name + " differs");
    csvs += fs::path(name).extension() == ".csv";
  }
  o.require(outputs[0].size() == outputs[1].size(), "report file sets differ");
  for (const char* want : {"reports/mel/confusion.csv", "reports/leaf/confusion.csv", "reports/leaf/filter_drift.csv"})
    o.require(outputs[0].count(want) == 1, std::string(want) + " missing");
  o.note(std::to_string(outputs[0].size()) + " report files (" + std::to_string(csvs) + " CSV) byte-identical across two runs, jobs 1");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"insectleaf acceptance checks"};
  std::string work = (fs::temp_directory_path() / "insectleaf_acceptance").string();
  std::vector<int> only;
  int jobs = 1;
  bool keep = false;
  app.add_option("-w,--work-dir", work, "Scratch directory for pipeline runs");
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 12));
  app.add_option("-j,--jobs", jobs, "Worker threads for the end-to-end run")->check(CLI::PositiveNumber);
  app.add_flag("--keep", keep, "Keep the scratch directory");
  CLI11_PARSE(app, argc, argv);

  const auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };
  const fs::path root(work);
  fs::create_directories(root);

  std::optional<EndToEnd> e2e;
  if (wanted(6) || wanted(9) || wanted(12)) {
    std::cerr << "running the end-to-end pipeline in " << (root / "e2e").string() << '\n';
    e2e = run_end_to_end(root, jobs);
  }
  const EndToEnd* shared = e2e ? &*e2e : nullptr;

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, shape_contract},
      {2, parameter_audit},
      {3, gradient_suite},
      {4, mel_init_equivalence},
      {5, early_stopping_replay},
      {6, [&] { return chunking_arithmetic(shared); }},
      {7, augmentation_contract},
      {8, untrained_loss},
      {9, [&] { return end_to_end_learning(shared); }},
      {10, metrics_oracle},
      {11, [&] { return determinism(root); }},
      {12, [&] { return drift_report(shared); }},
  };

  int failed = 0;
  for (const auto& [k, check] : criteria) {
    if (!wanted(k)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& ex) {
      o.require(false, std::string("exception: ") + ex.what());
    }
    failed += !o.pass;
    std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << '\n' << std::flush;
  }
  if (!keep) {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
  return failed == 0 ? 0 : 1;
}
