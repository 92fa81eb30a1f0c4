// Copyright 2026 The gatechar Authors
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

#include "gatechar/gst.hpp"

#include "gatechar/clifford.hpp"
#include "gatechar/least_squares.hpp"
#include "gatechar/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace gatechar {

namespace {

constexpr std::array<const char*, 3> kGateNames = {"Gi", "Gx", "Gy"};
constexpr double kProbabilityClip = 1e-10;
constexpr double kEigenFloor = 1e-7;

void check_labels(const GateString& s) {
  for (int g : s) {
    if (g < 0 || g > 2) throw std::invalid_argument("gate label out of range: " + std::to_string(g));
  }
}

GateString concat(std::initializer_list<const GateString*> parts) {
  GateString out;
  for (const GateString* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

Ptm matrix_power(Ptm base, int n) {
  Ptm out = Ptm::Identity();
  while (n > 0) {
    if (n & 1) out = base * out;
    base = base * base;
    n >>= 1;
  }
  return out;
}

double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

double clip_probability(double p) { return std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip); }

/// 2 N [f log(f/p) + (1-f) log((1-f)/(1-p))].
double deviance(double f, double p, double n) {
  p = clip_probability(p);
  const double d = 2.0 * n * (xlogy(f, f / p) + xlogy(1.0 - f, (1.0 - f) / (1.0 - p)));
  return std::max(d, 0.0);
}

Mat2 project_density(const Mat2& m) {
  const Mat2 h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat2> es(h);
  Eigen::Vector2d ev = es.eigenvalues().cwiseMax(kEigenFloor);
  Mat2 out = es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  return out / out.trace().real();
}

/// Choi matrix with the input-trace normalized to the identity.
Mat4c tp_normalize(const Mat4c& choi) {
  Mat2 t = Mat2::Zero();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < 2; ++i) t(a, b) += choi(2 * a + i, 2 * b + i);
  Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (t + t.adjoint()));
  if (es.eigenvalues().minCoeff() <= 0.0) {
    return Mat4c::Constant(Complex(std::numeric_limits<double>::quiet_NaN(), 0.0));
  }
  const Eigen::Vector2d inv_sqrt = es.eigenvalues().cwiseSqrt().cwiseInverse();
  const Mat2 s = es.eigenvectors() * inv_sqrt.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  Mat4c k = Mat4c::Zero();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) k.block<2, 2>(2 * a, 2 * b) = s(a, b) * Mat2::Identity();
  return k * choi * k;
}

/// Lower-triangular factor packed as 4 real diagonals then (re, im) pairs.
template <int N>
Eigen::Matrix<Complex, N, N> unpack_triangular(const double* x) {
  Eigen::Matrix<Complex, N, N> a = Eigen::Matrix<Complex, N, N>::Zero();
  int k = 0;
  for (int i = 0; i < N; ++i) a(i, i) = x[k++];
  for (int i = 1; i < N; ++i)
    for (int j = 0; j < i; ++j, k += 2) a(i, j) = Complex(x[k], x[k + 1]);
  return a;
}

template <int N>
void pack_triangular(const Eigen::Matrix<Complex, N, N>& a, double* x) {
  int k = 0;
  for (int i = 0; i < N; ++i) x[k++] = a(i, i).real();
  for (int i = 1; i < N; ++i)
    for (int j = 0; j < i; ++j, k += 2) {
      x[k] = a(i, j).real();
      x[k + 1] = a(i, j).imag();
    }
}

/// Gate-set parameter vector. CPTP: Cholesky factors of the Choi matrices and
/// of rho; TP: the lower three PTM rows and the Bloch part of rho. The effect
/// is a free Pauli vector in both.
struct Parameterization {
  bool cptp;

  int gate_size() const { return cptp ? 16 : 12; }
  int rho_size() const { return cptp ? 4 : 3; }
  int size() const { return 3 * gate_size() + rho_size() + 4; }

  GateSet unpack(const Eigen::VectorXd& x) const {
    GateSet gs;
    const double* p = x.data();
    for (int g = 0; g < 3; ++g, p += gate_size()) {
      if (cptp) {
        const Mat4c a = unpack_triangular<4>(p);
        gs.gates[g] = ptm_from_choi(tp_normalize(a * a.adjoint()));
      } else {
        gs.gates[g].row(0) << 1.0, 0.0, 0.0, 0.0;
        for (int r = 1; r < 4; ++r)
          for (int c = 0; c < 4; ++c) gs.gates[g](r, c) = p[4 * (r - 1) + c];
      }
    }
    if (cptp) {
      const Mat2 b = unpack_triangular<2>(p);
      const Mat2 rho = b * b.adjoint();
      gs.rho = to_pauli_vector(rho / rho.trace().real());
    } else {
      gs.rho << 1.0 / std::sqrt(2.0), p[0], p[1], p[2];
    }
    p += rho_size();
    gs.effect << p[0], p[1], p[2], p[3];
    return gs;
  }

  /// Projects a seed onto the model family (clipping negative Choi
  /// eigenvalues, renormalizing traces) before packing.
  Eigen::VectorXd pack(const GateSet& gs) const {
    Eigen::VectorXd x(size());
    double* p = x.data();
    for (int g = 0; g < 3; ++g, p += gate_size()) {
      if (cptp) {
        Mat4c j = choi_from_ptm(gs.gates[g]);
        j = 0.5 * (j + j.adjoint());
        Eigen::SelfAdjointEigenSolver<Mat4c> es(j);
        const Eigen::Vector4d ev = es.eigenvalues().cwiseMax(kEigenFloor);
        j = tp_normalize(es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint());
        const Mat4c l = Eigen::LLT<Mat4c>(0.5 * (j + j.adjoint())).matrixL();
        pack_triangular<4>(l, p);
      } else {
        for (int r = 1; r < 4; ++r)
          for (int c = 0; c < 4; ++c) p[4 * (r - 1) + c] = gs.gates[g](r, c);
      }
    }
    if (cptp) {
      const Mat2 rho = project_density(from_pauli_vector(gs.rho));
      const Mat2 l = Eigen::LLT<Mat2>(rho).matrixL();
      pack_triangular<2>(l, p);
    } else {
      const double scale = 1.0 / (std::sqrt(2.0) * gs.rho(0));
      for (int i = 0; i < 3; ++i) p[i] = gs.rho(i + 1) * scale;
    }
    p += rho_size();
    for (int i = 0; i < 4; ++i) p[i] = gs.effect(i);
    return x;
  }
};

std::vector<int> active_circuits(const GSTDesign& design, int max_depth) {
  std::vector<int> out;
  for (std::size_t c = 0; c < design.circuits.size(); ++c) {
    if (design.circuits[c].depth <= max_depth) out.push_back(static_cast<int>(c));
  }
  return out;
}

void check_dataset(const GSTDesign& design, const GSTDataset& data) {
  if (data.shots.size() != design.circuits.size() || data.counts0.size() != design.circuits.size()) {
    throw std::invalid_argument("dataset size does not match the design");
  }
}

double lookup_frequency(const GSTDesign& design, const GSTDataset& data, const GateString& s) {
  const int idx = design.find(s);
  if (idx < 0) throw std::invalid_argument("design lacks circuit " + format_gate_string(s));
  return data.frequency(static_cast<std::size_t>(idx));
}

int empty_fiducial(const GSTDesign& design) {
  for (std::size_t i = 0; i < design.fiducials.size(); ++i) {
    if (design.fiducials[i].empty()) return static_cast<int>(i);
  }
  throw std::invalid_argument("linear inversion needs the empty fiducial");
}

double condition_number(const Eigen::Matrix4d& m) {
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(m);
  const auto& s = svd.singularValues();
  return s(3) > 0.0 ? s(0) / s(3) : std::numeric_limits<double>::infinity();
}

}  // namespace

std::string format_gate_string(const GateString& s) {
  if (s.empty()) return "{}";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] < 0 || s[i] > 2) throw std::invalid_argument("gate label out of range");
    if (i) out += ':';
    out += kGateNames[static_cast<std::size_t>(s[i])];
  }
  return out;
}

GateString parse_gate_string(const std::string& text) {
  if (text == "{}" || text.empty()) return {};
  GateString out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    const auto it = std::find(kGateNames.begin(), kGateNames.end(), item);
    if (it == kGateNames.end()) throw std::invalid_argument("unknown gate label '" + item + "'");
    out.push_back(static_cast<int>(it - kGateNames.begin()));
  }
  return out;
}

std::vector<GateString> default_fiducials() {
  return {{}, {kGx}, {kGy}, {kGx, kGx, kGx}, {kGy, kGy, kGy}, {kGx, kGx}};
}

std::vector<GateString> default_germs() {
  return {{kGi},
          {kGx},
          {kGy},
          {kGx, kGy},
          {kGx, kGx, kGy},
          {kGx, kGy, kGy},
          {kGx, kGy, kGi},
          {kGx, kGi, kGy},
          {kGx, kGi, kGi},
          {kGy, kGi, kGi},
          {kGx, kGy, kGy, kGi},
          {kGx, kGx, kGy, kGx, kGy, kGy}};
}

int GSTDesign::find(const GateString& s) const {
  const auto it = index_.find(s);
  return it == index_.end() ? -1 : it->second;
}

GSTDesign build_design(int max_depth, int shots, std::vector<GateString> fiducials, std::vector<GateString> germs) {
  if (max_depth < 1) throw std::invalid_argument("build_design: max_depth must be >= 1");
  if (shots <= 0) throw std::invalid_argument("build_design: shots must be positive");
  if (fiducials.empty() || germs.empty()) throw std::invalid_argument("build_design: empty fiducial or germ list");
  for (const auto& f : fiducials) check_labels(f);
  for (const auto& g : germs) {
    if (g.empty()) throw std::invalid_argument("build_design: empty germ");
    check_labels(g);
  }

  GSTDesign d;
  d.fiducials = std::move(fiducials);
  d.germs = std::move(germs);
  d.shots = shots;
  for (int l = 1; l <= max_depth; l *= 2) d.depths.push_back(l);

  auto add = [&d](GSTCircuit c) {
    if (d.index_.count(c.gates)) return;
    d.index_.emplace(c.gates, static_cast<int>(d.circuits.size()));
    d.circuits.push_back(std::move(c));
  };
  const int nf = static_cast<int>(d.fiducials.size());
  for (int i = 0; i < nf; ++i)
    for (int j = 0; j < nf; ++j) add({concat({&d.fiducials[i], &d.fiducials[j]}), i, -1, 0, j, 0});
  for (int l : d.depths) {
    for (std::size_t g = 0; g < d.germs.size(); ++g) {
      const int reps = std::max(1, l / static_cast<int>(d.germs[g].size()));
      GateString body;
      for (int r = 0; r < reps; ++r) body.insert(body.end(), d.germs[g].begin(), d.germs[g].end());
      for (int i = 0; i < nf; ++i) {
        for (int j = 0; j < nf; ++j) {
          ++d.raw_count;
          add({concat({&d.fiducials[i], &body, &d.fiducials[j]}), i, static_cast<int>(g), reps, j, l});
        }
      }
    }
  }
  return d;
}

GateSet GateSet::ideal() {
  const double h = std::numbers::pi / 2.0;
  GateSet gs;
  gs.gates[kGi] = Ptm::Identity();
  gs.gates[kGx] = ptm_from_unitary(rx(h));
  gs.gates[kGy] = ptm_from_unitary(ry(h));
  Mat2 ground = Mat2::Zero();
  ground(0, 0) = 1.0;
  gs.rho = to_pauli_vector(ground);
  gs.effect = to_pauli_vector(ground);
  return gs;
}

QubitChannel GateSet::gate(int label) const {
  QubitChannel c;
  c.ptm = gates.at(static_cast<std::size_t>(label));
  c.trace_decreasing = !is_trace_preserving(c.ptm);
  return c;
}

Mat2 GateSet::rho_matrix() const { return from_pauli_vector(rho); }

MeasurementEffect GateSet::measurement() const { return MeasurementEffect(from_pauli_vector(effect)); }

Ptm GateSet::string_ptm(const GateString& s) const {
  Ptm out = Ptm::Identity();
  for (int g : s) out = gates.at(static_cast<std::size_t>(g)) * out;
  return out;
}

double GateSet::probability(const GateString& s) const {
  PauliVector v = rho;
  for (int g : s) v = gates.at(static_cast<std::size_t>(g)) * v;
  return effect.dot(v);
}

GateSet GateSet::gauge_transform(const Eigen::Matrix4d& m) const {
  const Eigen::Matrix4d inv = m.inverse();
  GateSet out;
  for (int g = 0; g < 3; ++g) out.gates[g] = m * gates[g] * inv;
  out.rho = m * rho;
  out.effect = inv.transpose() * effect;
  return out;
}

std::vector<double> circuit_probabilities(const GateSet& gs, const GSTDesign& design) {
  const std::size_t nf = design.fiducials.size();
  std::vector<PauliVector> prep(nf);
  std::vector<Eigen::RowVector4d> meas(nf);
  for (std::size_t i = 0; i < nf; ++i) {
    const Ptm f = gs.string_ptm(design.fiducials[i]);
    prep[i] = f * gs.rho;
    meas[i] = gs.effect.transpose() * f;
  }
  std::vector<Ptm> germ(design.germs.size());
  for (std::size_t g = 0; g < germ.size(); ++g) germ[g] = gs.string_ptm(design.germs[g]);
  std::map<std::pair<int, int>, Ptm> powers;

  std::vector<double> out(design.circuits.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const GSTCircuit& cc = design.circuits[c];
    const auto& e = meas[static_cast<std::size_t>(cc.meas)];
    const auto& r = prep[static_cast<std::size_t>(cc.prep)];
    if (cc.germ < 0) {
      out[c] = e.dot(r);
      continue;
    }
    const auto key = std::make_pair(cc.germ, cc.reps);
    auto it = powers.find(key);
    if (it == powers.end()) {
      it = powers.emplace(key, matrix_power(germ[static_cast<std::size_t>(cc.germ)], cc.reps)).first;
    }
    out[c] = e * it->second * r;
  }
  return out;
}

GSTDataset simulate_dataset(const GSTDesign& design, const GateSet& source, std::uint64_t seed,
                            const GateSetDrift& drift, int workers) {
  const std::size_t n = design.circuits.size();
  std::vector<double> probs;
  if (!drift) probs = circuit_probabilities(source, design);
  GSTDataset data;
  data.shots.assign(n, static_cast<double>(design.shots));
  data.counts0.assign(n, 0.0);
  parallel_for(static_cast<int>(n), workers, [&](int c) {
    const std::size_t uc = static_cast<std::size_t>(c);
    double p;
    if (drift) {
      const double position = n > 1 ? static_cast<double>(c) / static_cast<double>(n - 1) : 0.0;
      p = drift(source, position).probability(design.circuits[uc].gates);
    } else {
      p = probs[uc];
    }
    if (!(p >= -1e-9 && p <= 1.0 + 1e-9)) {
      throw NumericalError("model probability " + std::to_string(p) + " outside [0, 1] for circuit " +
                           format_gate_string(design.circuits[uc].gates));
    }
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    std::binomial_distribution<int> dist(design.shots, std::clamp(p, 0.0, 1.0));
    data.counts0[uc] = dist(rng);
  });
  return data;
}

GSTDataset exact_dataset(const GSTDesign& design, const GateSet& source) {
  const auto probs = circuit_probabilities(source, design);
  GSTDataset data;
  data.exact = true;
  data.shots.assign(probs.size(), static_cast<double>(design.shots));
  data.counts0.resize(probs.size());
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (!(probs[c] >= -1e-9 && probs[c] <= 1.0 + 1e-9)) throw NumericalError("model probability outside [0, 1]");
    data.counts0[c] = design.shots * std::clamp(probs[c], 0.0, 1.0);
  }
  return data;
}

GateSet gate_set_from_pulse(const PulseParams& x90, const DeviceParams& dev) {
  PulseParams base = x90;
  base.phase = 0.0;
  GateSet gs = GateSet::ideal();
  const Ptm x = gate_channel(base, dev).channel.ptm;
  const double phi = generator_phase(Generator::kY90);
  gs.gates[kGx] = x;
  gs.gates[kGy] = rz_ptm(-phi) * x * rz_ptm(phi);
  PulseParams idle = base;
  idle.omega0 = 0.0;
  idle.alpha = 0.0;
  idle.df = 0.0;
  gs.gates[kGi] = gate_channel(idle, dev).channel.ptm;
  return gs;
}

GramReport gram_matrix(const GSTDesign& design, const GSTDataset& data) {
  check_dataset(design, data);
  const int n = static_cast<int>(design.fiducials.size());
  GramReport rep;
  rep.gram.resize(n, n);
  double min_shots = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const GateString s = concat({&design.fiducials[i], &design.fiducials[j]});
      rep.gram(i, j) = lookup_frequency(design, data, s);
      min_shots = std::min(min_shots, data.shots[static_cast<std::size_t>(design.find(s))]);
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rep.gram);
  rep.singular_values = svd.singularValues();
  const double s0 = rep.singular_values(0);
  // Largest singular value of an n x n matrix of independent shot-noise
  // entries (std <= 1/(2 sqrt N)) is about sqrt(n/N); three times that.
  rep.noise_floor = data.exact ? 1e-9 * s0 : 3.0 * std::sqrt(static_cast<double>(n) / min_shots);
  rep.rank = static_cast<int>((rep.singular_values.array() > rep.noise_floor).count());
  rep.condition = n >= 4 && rep.singular_values(3) > 0.0 ? s0 / rep.singular_values(3)
                                                          : std::numeric_limits<double>::infinity();
  rep.complete = rep.rank >= 4;
  return rep;
}

GateSet lgst(const GSTDesign& design, const GSTDataset& data, const GateSet& target) {
  const GramReport rep = gram_matrix(design, data);
  if (!rep.complete) {
    throw NumericalError("fiducials are not informationally complete: Gram rank " + std::to_string(rep.rank));
  }
  const int n = static_cast<int>(design.fiducials.size());
  const int e0 = empty_fiducial(design);
  // Rows: measurement fiducial; columns: preparation fiducial.
  const Eigen::MatrixXd p = rep.gram.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(p, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::MatrixXd u = svd.matrixU().leftCols(4);
  const Eigen::MatrixXd v = svd.matrixV().leftCols(4);
  const Eigen::Vector4d s = svd.singularValues().head(4);
  const Eigen::Vector4d s_half = s.cwiseSqrt();
  const Eigen::Vector4d s_inv_half = s_half.cwiseInverse();

  GateSet est;
  for (int g = 0; g < 3; ++g) {
    Eigen::MatrixXd pg(n, n);
    const GateString gate = {g};
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        pg(j, i) = lookup_frequency(design, data, concat({&design.fiducials[i], &gate, &design.fiducials[j]}));
    est.gates[g] = s_inv_half.asDiagonal() * (u.transpose() * pg * v) * s_inv_half.asDiagonal();
  }
  est.rho = s_half.asDiagonal() * v.row(e0).transpose();
  est.effect = (u.row(e0) * s_half.asDiagonal()).transpose();

  // Initial gauge from matching the measurement frame to the target's.
  Eigen::MatrixXd a_target(n, 4);
  for (int j = 0; j < n; ++j) {
    a_target.row(j) = target.effect.transpose() * target.string_ptm(design.fiducials[static_cast<std::size_t>(j)]);
  }
  const Eigen::Matrix4d m_inv = s_inv_half.asDiagonal() * u.transpose() * a_target;
  const Eigen::Matrix4d m0 = m_inv.inverse();
  if (!m0.allFinite()) throw NumericalError("linear inversion: singular measurement frame");
  return gauge_optimize(est, target, {}, m0).gates;
}

double gauge_distance(const GateSet& a, const GateSet& b, const GaugeOptions& opts) {
  double d = 0.0;
  for (int g = 0; g < 3; ++g) d += opts.gate_weight * (a.gates[g] - b.gates[g]).squaredNorm();
  d += opts.spam_weight * ((a.rho - b.rho).squaredNorm() + (a.effect - b.effect).squaredNorm());
  return d;
}

GaugeResult gauge_optimize(const GateSet& estimate, const GateSet& target, const GaugeOptions& opts,
                           const Eigen::Matrix4d& initial) {
  const int np = opts.tp_only ? 12 : 16;
  const int offset = 16 - np;
  auto to_matrix = [&](const Eigen::VectorXd& x) {
    Eigen::Matrix4d m = initial;
    if (opts.tp_only) m.row(0) << 1.0, 0.0, 0.0, 0.0;
    for (int k = 0; k < np; ++k) m((k + offset) / 4, (k + offset) % 4) = x(k);
    return m;
  };
  const double wg = std::sqrt(opts.gate_weight);
  const double ws = std::sqrt(opts.spam_weight);
  LsqProblem problem;
  problem.residuals = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(56);
    const Eigen::Matrix4d m = to_matrix(x);
    if (!(condition_number(m) <= opts.max_condition)) {
      r.setConstant(std::numeric_limits<double>::quiet_NaN());
      return r;
    }
    const GateSet t = estimate.gauge_transform(m);
    for (int g = 0; g < 3; ++g) {
      const Eigen::Matrix4d diff = wg * (t.gates[g] - target.gates[g]);
      r.segment<16>(16 * g) = Eigen::Map<const Eigen::VectorXd>(diff.data(), 16);
    }
    r.segment<4>(48) = ws * (t.rho - target.rho);
    r.segment<4>(52) = ws * (t.effect - target.effect);
    return r;
  };
  Eigen::VectorXd x0(np);
  Eigen::Matrix4d start = initial;
  if (opts.tp_only) start.row(0) << 1.0, 0.0, 0.0, 0.0;
  for (int k = 0; k < np; ++k) x0(k) = start((k + offset) / 4, (k + offset) % 4);
  if (!(condition_number(start) <= opts.max_condition)) {
    throw std::invalid_argument("gauge_optimize: ill-conditioned initial gauge");
  }
  const LsqResult res = solve_least_squares(problem, x0);
  GaugeResult out;
  out.m = to_matrix(res.x);
  out.gates = estimate.gauge_transform(out.m);
  out.distance = gauge_distance(out.gates, target, opts);
  return out;
}

double log_likelihood(const GateSet& gs, const GSTDesign& design, const GSTDataset& data, int max_depth) {
  check_dataset(design, data);
  const auto probs = circuit_probabilities(gs, design);
  double ll = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (design.circuits[c].depth > max_depth) continue;
    const double p = clip_probability(probs[c]);
    const double f = data.frequency(c);
    ll += data.shots[c] * (xlogy(f, p) + xlogy(1.0 - f, 1.0 - p));
  }
  return ll;
}

GateSetEstimate mle_optimize(const GSTDesign& design, const GSTDataset& data, const GateSet& seed,
                             const MLEOptions& opts) {
  check_dataset(design, data);
  const int max_depth = design.depths.empty() ? 0 : design.depths.back();
  // Depth stages run in the TP family, which converges quickly from a linear
  // inversion seed; the Cholesky parameterization stalls when started far
  // from the optimum, so the CPTP fit is a final refinement on all circuits.
  std::vector<std::pair<int, bool>> stages;
  if (opts.iterative) {
    for (int l : design.depths) stages.emplace_back(l, false);
  }
  if (opts.cptp || stages.empty() || stages.back().first != max_depth) stages.emplace_back(max_depth, opts.cptp);

  GateSetEstimate est;
  est.cptp = opts.cptp;
  est.converged = true;
  GateSet current = seed;
  for (const auto& [depth, cptp] : stages) {
    const Parameterization param{cptp};
    if (cptp && opts.iterative) {
      // Undo gauge drift accumulated by the TP stages so that projecting
      // onto CP maps are not distorted by a non-unitary gauge.
      GaugeOptions go;
      go.tp_only = true;
      current = gauge_optimize(current, opts.gauge_target.value_or(GateSet::ideal()), go).gates;
    }
    const Eigen::VectorXd x = param.pack(current);
    const std::vector<int> active = active_circuits(design, depth);
    const Eigen::Index nr = static_cast<Eigen::Index>(active.size());
    auto probabilities = [&](const Eigen::VectorXd& xv) {
      const auto all = circuit_probabilities(param.unpack(xv), design);
      Eigen::VectorXd p(nr);
      for (Eigen::Index k = 0; k < nr; ++k) p(k) = all[static_cast<std::size_t>(active[k])];
      return p;
    };
    auto residuals_from = [&](const Eigen::VectorXd& p) {
      Eigen::VectorXd r(nr);
      for (Eigen::Index k = 0; k < nr; ++k) {
        const std::size_t c = static_cast<std::size_t>(active[k]);
        if (!std::isfinite(p(k))) {
          r(k) = std::numeric_limits<double>::quiet_NaN();
          continue;
        }
        const double f = data.frequency(c);
        const double d = std::sqrt(deviance(f, p(k), data.shots[c]));
        r(k) = p(k) >= f ? d : -d;
      }
      return r;
    };
    LsqProblem problem;
    problem.residuals = [&](const Eigen::VectorXd& xv) { return residuals_from(probabilities(xv)); };
    problem.jacobian = [&](const Eigen::VectorXd& xv) {
      const Eigen::VectorXd p = probabilities(xv);
      const Eigen::VectorXd r = residuals_from(p);
      Eigen::VectorXd drdp(nr);
      for (Eigen::Index k = 0; k < nr; ++k) {
        const std::size_t c = static_cast<std::size_t>(active[k]);
        const double pc = clip_probability(p(k));
        const double f = data.frequency(c);
        const double n = data.shots[c];
        const double var = pc * (1.0 - pc);
        drdp(k) = std::abs(r(k)) > 1e-8 ? n * (pc - f) / (var * r(k)) : std::sqrt(n / var);
        if (p(k) != pc) drdp(k) = 0.0;
      }
      Eigen::MatrixXd jac(nr, xv.size());
      for (Eigen::Index j = 0; j < xv.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(xv(j)));
        Eigen::VectorXd xp = xv, xm = xv;
        xp(j) += h;
        xm(j) -= h;
        jac.col(j) = drdp.cwiseProduct((probabilities(xp) - probabilities(xm)) / (2.0 * h));
      }
      return jac;
    };
    LsqOptions lo;
    lo.max_iterations = opts.max_iterations;
    lo.gtol = opts.tolerance;
    lo.ftol = 1e-13;
    lo.xtol = 1e-11;
    const LsqResult res = solve_least_squares(problem, x, lo);
    current = param.unpack(res.x);
    if (!est.stage_depths.empty() && est.stage_depths.back() == depth) {
      est.stage_gates.back() = current;
    } else {
      est.stage_depths.push_back(depth);
      est.stage_gates.push_back(current);
    }
    est.iterations += res.iterations;
    est.converged = est.converged && res.converged;
  }
  est.gates = current;
  est.log_likelihood = log_likelihood(est.gates, design, data);
  est.message = est.converged ? "converged" : "iteration limit reached";
  return est;
}

namespace {

ViolationReport score_violation(const GSTDesign& design, const GSTDataset& data, const GateSet& final_gates,
                                const std::vector<int>& depths, const std::vector<const GateSet*>& stage_gates,
                                int n_parameters) {
  check_dataset(design, data);
  const std::size_t n = design.circuits.size();
  ViolationReport rep;
  rep.k = static_cast<double>(n) - n_parameters;
  if (rep.k <= 0.0) throw std::invalid_argument("model_violation: fewer circuits than model parameters");
  const auto probs = circuit_probabilities(final_gates, design);
  rep.circuit_deviance.resize(n);
  rep.circuit_score.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    const double d = deviance(data.frequency(c), probs[c], data.shots[c]);
    rep.circuit_deviance[c] = d;
    rep.circuit_score[c] = (d - 1.0) / std::sqrt(2.0);
    rep.two_delta_logl += d;
  }
  rep.n_sigma = (rep.two_delta_logl - rep.k) / std::sqrt(2.0 * rep.k);

  for (std::size_t s = 0; s < depths.size(); ++s) {
    const auto stage_probs = circuit_probabilities(*stage_gates[s], design);
    ViolationDepth g;
    g.depth = depths[s];
    for (std::size_t c = 0; c < n; ++c) {
      if (design.circuits[c].depth > g.depth) continue;
      ++g.n_circuits;
      g.two_delta_logl += deviance(data.frequency(c), stage_probs[c], data.shots[c]);
    }
    g.k = static_cast<double>(g.n_circuits - n_parameters);
    if (g.k <= 0.0) continue;
    g.n_sigma = (g.two_delta_logl - g.k) / std::sqrt(2.0 * g.k);
    rep.per_depth.push_back(g);
  }
  return rep;
}

}  // namespace

ViolationReport model_violation(const GateSet& estimate, const GSTDesign& design, const GSTDataset& data,
                                int n_parameters) {
  const std::vector<const GateSet*> stages(design.depths.size(), &estimate);
  return score_violation(design, data, estimate, design.depths, stages, n_parameters);
}

ViolationReport model_violation(const GateSetEstimate& estimate, const GSTDesign& design, const GSTDataset& data,
                                int n_parameters) {
  std::vector<const GateSet*> stages;
  for (int l : design.depths) {
    const auto it = std::find(estimate.stage_depths.begin(), estimate.stage_depths.end(), l);
    stages.push_back(it == estimate.stage_depths.end()
                         ? &estimate.gates
                         : &estimate.stage_gates[static_cast<std::size_t>(it - estimate.stage_depths.begin())]);
  }
  return score_violation(design, data, estimate.gates, design.depths, stages, n_parameters);
}

RBAnalysis rb_from_gateset(const GateSet& gs, const RBConfig& cfg, int n_resamples, int workers) {
  cfg.validate();
  const CliffordChannels channels = CliffordChannels::from_gate_set(gs.gate(kGx), gs.gate(kGy), gs.gate(kGi));
  const RBDataset data = run_sequences(gen_rb_sequences(cfg), channels, cfg.shots, cfg.seed, {}, workers);
  return analyze_rb(data, n_resamples, derive_seed(cfg.seed, {3}));
}

GSTResult run_gst(const GSTDesign& design, const GSTDataset& data, const GateSet& target, const MLEOptions& opts) {
  GSTResult out;
  out.gram = gram_matrix(design, data);
  out.lgst = lgst(design, data, target);
  MLEOptions mle_opts = opts;
  if (!mle_opts.gauge_target) mle_opts.gauge_target = target;
  out.mle = mle_optimize(design, data, out.lgst, mle_opts);
  GaugeOptions go;
  go.tp_only = true;
  out.estimate = gauge_optimize(out.mle.gates, target, go).gates;
  out.violation = model_violation(out.mle, design, data);
  return out;
}

double ptm_frobenius_error(const Ptm& a, const Ptm& b) { return (a - b).norm(); }

void write_circuit_list(std::ostream& out, const GSTDesign& design) {
  for (const auto& c : design.circuits) out << format_gate_string(c.gates) << '\n';
}

void write_gst_dataset_csv(std::ostream& out, const GSTDesign& design, const GSTDataset& data) {
  check_dataset(design, data);
  out << "circuit,depth,shots,count0,frequency\n" << std::setprecision(17);
  for (std::size_t c = 0; c < design.circuits.size(); ++c) {
    out << format_gate_string(design.circuits[c].gates) << ',' << design.circuits[c].depth << ','
        << data.shots[c] << ',' << data.counts0[c] << ',' << data.frequency(c) << '\n';
  }
}

std::string gate_set_to_json(const GateSet& gs, double log_likelihood) {
  nlohmann::json j;
  j["basis"] = "pauli-normalized";
  for (int g = 0; g < 3; ++g) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) rows.push_back({gs.gates[g](r, 0), gs.gates[g](r, 1), gs.gates[g](r, 2), gs.gates[g](r, 3)});
    j["gates"][kGateNames[static_cast<std::size_t>(g)]] = rows;
  }
  j["rho"] = {gs.rho(0), gs.rho(1), gs.rho(2), gs.rho(3)};
  j["effect"] = {gs.effect(0), gs.effect(1), gs.effect(2), gs.effect(3)};
  j["log_likelihood"] = log_likelihood;
  return j.dump(2);
}

GateSet gate_set_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  GateSet gs;
  for (int g = 0; g < 3; ++g) {
    const auto& rows = j.at("gates").at(kGateNames[static_cast<std::size_t>(g)]);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) gs.gates[g](r, c) = rows.at(r).at(c).get<double>();
  }
  for (int i = 0; i < 4; ++i) {
    gs.rho(i) = j.at("rho").at(i).get<double>();
    gs.effect(i) = j.at("effect").at(i).get<double>();
  }
  return gs;
}

void write_violation_csv(std::ostream& out, const ViolationReport& report) {
  out << "depth,n_circuits,two_delta_logl,k,n_sigma\n" << std::setprecision(10);
  for (const auto& g : report.per_depth) {
    out << g.depth << ',' << g.n_circuits << ',' << g.two_delta_logl << ',' << g.k << ',' << g.n_sigma << '\n';
  }
  out << "total," << report.circuit_deviance.size() << ',' << report.two_delta_logl << ',' << report.k << ','
      << report.n_sigma << '\n';
}

}  // namespace gatechar
