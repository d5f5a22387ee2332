#include "lnadmm/ct_forward.hpp"

#include "ct_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lnadmm::ct {

// ---------------------------------------------------------------------------
// Geometry and projector

void Geometry::validate() const {
  if (nx < 1 || ny < 1) throw std::invalid_argument("ct.grid: pixel counts must be >= 1");
  if (!(pixel_size > 0.0)) throw std::invalid_argument("ct.pixel_size: must be > 0");
  if (n_angles < 1) throw std::invalid_argument("ct.n_angles: must be >= 1");
  if (n_detectors < 1) throw std::invalid_argument("ct.n_detectors: must be >= 1");
  if (!std::isfinite(detector_span)) throw std::invalid_argument("ct.detector_span: must be finite");
}

double Geometry::span() const {
  return detector_span > 0.0 ? detector_span : std::hypot(width(), height());
}

double Geometry::ray_angle(Eigen::Index l) const {
  return std::numbers::pi * double(l / n_detectors) / double(n_angles);
}

double Geometry::ray_offset(Eigen::Index l) const {
  const double s = span();
  return -0.5 * s + (double(l % n_detectors) + 0.5) * s / double(n_detectors);
}

namespace {

struct RayLine {
  double px, py, dx, dy;
  double t0, t1;
  bool hit;
};

constexpr double kParallelEps = 1e-14;

RayLine clip_ray(const Geometry& g, double angle, double offset) {
  RayLine r{};
  r.dx = std::cos(angle);
  r.dy = std::sin(angle);
  r.px = -offset * r.dy;
  r.py = offset * r.dx;
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  auto slab = [&](double p, double d, double lo, double hi) {
    if (std::abs(d) < kParallelEps) {
      if (p < lo || p > hi) t1 = -std::numeric_limits<double>::infinity();
      return;
    }
    const double a = (lo - p) / d, b = (hi - p) / d;
    t0 = std::max(t0, std::min(a, b));
    t1 = std::min(t1, std::max(a, b));
  };
  slab(r.px, r.dx, -0.5 * g.width(), 0.5 * g.width());
  slab(r.py, r.dy, -0.5 * g.height(), 0.5 * g.height());
  r.t0 = t0;
  r.t1 = t1;
  r.hit = t1 > t0;
  return r;
}

}  // namespace

double chord_length(const Geometry& g, double angle, double offset) {
  const RayLine r = clip_ray(g, angle, offset);
  return r.hit ? r.t1 - r.t0 : 0.0;
}

std::vector<std::pair<Eigen::Index, double>> trace_ray(const Geometry& g, double angle,
                                                       double offset) {
  std::vector<std::pair<Eigen::Index, double>> out;
  const RayLine r = clip_ray(g, angle, offset);
  if (!r.hit) return out;

  const double x0 = -0.5 * g.width(), y0 = -0.5 * g.height(), ps = g.pixel_size;
  std::vector<double> ts{r.t0, r.t1};
  ts.reserve(static_cast<std::size_t>(g.nx + g.ny + 4));
  if (std::abs(r.dx) >= kParallelEps)
    for (Eigen::Index i = 0; i <= g.nx; ++i) {
      const double t = (x0 + double(i) * ps - r.px) / r.dx;
      if (t > r.t0 && t < r.t1) ts.push_back(t);
    }
  if (std::abs(r.dy) >= kParallelEps)
    for (Eigen::Index i = 0; i <= g.ny; ++i) {
      const double t = (y0 + double(i) * ps - r.py) / r.dy;
      if (t > r.t0 && t < r.t1) ts.push_back(t);
    }
  std::sort(ts.begin(), ts.end());

  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const double len = ts[k + 1] - ts[k];
    if (!(len > 0.0)) continue;
    const double mid = 0.5 * (ts[k] + ts[k + 1]);
    const auto ix = static_cast<Eigen::Index>(std::floor((r.px + mid * r.dx - x0) / ps));
    const auto iy = static_cast<Eigen::Index>(std::floor((r.py + mid * r.dy - y0) / ps));
    if (ix < 0 || ix >= g.nx || iy < 0 || iy >= g.ny) continue;
    const Eigen::Index pix = iy * g.nx + ix;
    if (!out.empty() && out.back().first == pix)
      out.back().second += len;
    else
      out.emplace_back(pix, len);
  }
  return out;
}

SparseMatrix build_projector(const Geometry& g) {
  g.validate();
  std::vector<Triplet> trips;
  for (Eigen::Index l = 0; l < g.n_rays(); ++l) {
    auto segs = trace_ray(g, g.ray_angle(l), g.ray_offset(l));
    // A ray may re-enter a pixel only through a degenerate corner split.
    std::sort(segs.begin(), segs.end());
    for (std::size_t k = 0; k < segs.size(); ++k) {
      if (k > 0 && segs[k].first == segs[k - 1].first) {
        trips.back() = Triplet(l, segs[k].first, trips.back().value() + segs[k].second);
        continue;
      }
      trips.emplace_back(l, segs[k].first, segs[k].second);
    }
  }
  return make_sparse(g.n_rays(), g.n_pixels(), trips);
}

// ---------------------------------------------------------------------------
// Tabulated data

namespace {

bool next_data_line(std::istream& is, std::string& line) {
  while (std::getline(is, line)) {
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '#') continue;
    return true;
  }
  return false;
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string t; ss >> t;) out.push_back(t);
  return out;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return f;
}

void check_increasing(const Vector& e, const std::string& what) {
  for (Eigen::Index i = 1; i < e.size(); ++i)
    if (!(e[i] > e[i - 1])) throw std::runtime_error(what + ": energies must be strictly increasing");
}

}  // namespace

AttenuationTable read_attenuation_table(std::istream& is) {
  std::string line;
  if (!next_data_line(is, line)) throw std::runtime_error("attenuation table: missing header");
  const auto head = tokens(line);
  if (head.size() < 2 || head[0] != "energy_keV")
    throw std::runtime_error("attenuation table: header must start with energy_keV");
  AttenuationTable t;
  for (std::size_t c = 1; c < head.size(); ++c) {
    if (head[c].rfind("mu_", 0) != 0)
      throw std::runtime_error("attenuation table: column \"" + head[c] + "\" lacks mu_ prefix");
    t.materials.push_back(head[c].substr(3));
  }
  std::vector<std::vector<double>> rows;
  while (next_data_line(is, line)) {
    std::istringstream ss(line);
    std::vector<double> row(head.size());
    for (auto& v : row)
      if (!(ss >> v)) throw std::runtime_error("attenuation table: short row \"" + line + "\"");
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  t.energy.resize(n);
  t.mu.resize(static_cast<Eigen::Index>(t.materials.size()), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    t.energy[i] = rows[i][0];
    for (std::size_t m = 0; m < t.materials.size(); ++m) {
      const double v = rows[i][m + 1];
      if (!(v >= 0.0)) throw std::runtime_error("attenuation table: negative coefficient");
      t.mu(static_cast<Eigen::Index>(m), i) = v;
    }
  }
  check_increasing(t.energy, "attenuation table");
  return t;
}

AttenuationTable read_attenuation_table(const std::string& path) {
  auto f = open_or_throw(path);
  return read_attenuation_table(f);
}

Spectrum read_spectrum(std::istream& is) {
  std::string line;
  if (!next_data_line(is, line)) throw std::runtime_error("spectrum: missing header");
  const auto head = tokens(line);
  if (head.size() != 2 || head[0] != "energy_keV" || head[1] != "density")
    throw std::runtime_error("spectrum: header must be \"energy_keV density\"");
  std::vector<double> e, d;
  while (next_data_line(is, line)) {
    std::istringstream ss(line);
    double a = 0, b = 0;
    if (!(ss >> a >> b)) throw std::runtime_error("spectrum: bad row \"" + line + "\"");
    if (!(b >= 0.0)) throw std::runtime_error("spectrum: negative density");
    e.push_back(a);
    d.push_back(b);
  }
  Spectrum s{Eigen::Map<Vector>(e.data(), Eigen::Index(e.size())),
             Eigen::Map<Vector>(d.data(), Eigen::Index(d.size()))};
  check_increasing(s.energy, "spectrum");
  return s;
}

Spectrum read_spectrum(const std::string& path) {
  auto f = open_or_throw(path);
  return read_spectrum(f);
}

double interpolate(const Vector& xs, const Vector& ys, double x) {
  const Eigen::Index n = xs.size();
  if (n == 0) throw std::invalid_argument("interpolate: empty table");
  if (x <= xs[0]) return ys[0];
  if (x >= xs[n - 1]) return ys[n - 1];
  const auto it = std::upper_bound(xs.data(), xs.data() + n, x);
  const Eigen::Index hi = it - xs.data(), lo = hi - 1;
  const double f = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + f * (ys[hi] - ys[lo]);
}

std::string data_dir() {
#ifdef LNADMM_DATA_DIR
  return LNADMM_DATA_DIR;
#else
  return "data";
#endif
}

SpectralModel build_spectral_model(const SpectralConfig& cfg, Eigen::Index n_rays) {
  if (cfg.materials.empty()) throw std::invalid_argument("ct.materials: at least one required");
  if (Eigen::Index(cfg.materials.size()) > detail::kMaxMaterials)
    throw std::invalid_argument("ct.materials: at most 8 supported");
  if (!(cfg.e_max > cfg.e_min) || !(cfg.e_min > 0.0))
    throw std::invalid_argument("ct.e_min/e_max: need 0 < e_min < e_max");
  if (cfg.n_energies < 1) throw std::invalid_argument("ct.n_energies: must be >= 1");
  if (cfg.n_windows < 1) throw std::invalid_argument("ct.n_windows: must be >= 1");
  if (!(cfg.blur_width >= 0.0)) throw std::invalid_argument("ct.blur_width: must be >= 0");
  if (!(cfg.total_intensity > 0.0)) throw std::invalid_argument("ct.intensity: must be > 0");
  if (!cfg.thresholds.empty() && Eigen::Index(cfg.thresholds.size()) != cfg.n_windows - 1)
    throw std::invalid_argument("ct.thresholds: need n_windows - 1 values");
  for (std::size_t k = 1; k < cfg.thresholds.size(); ++k)
    if (!(cfg.thresholds[k] > cfg.thresholds[k - 1]))
      throw std::invalid_argument("ct.thresholds: must be strictly increasing");

  const auto table = read_attenuation_table(
      cfg.attenuation_file.empty() ? data_dir() + "/attenuation.txt" : cfg.attenuation_file);
  const auto spectrum = read_spectrum(
      cfg.spectrum_file.empty() ? data_dir() + "/spectrum_120kvp.txt" : cfg.spectrum_file);

  SpectralModel m;
  const Eigen::Index ni = cfg.n_energies;
  const double de = (cfg.e_max - cfg.e_min) / double(ni);
  m.energies = Vector::LinSpaced(ni, cfg.e_min + 0.5 * de, cfg.e_max - 0.5 * de);
  if (ni == 1) m.energies[0] = 0.5 * (cfg.e_min + cfg.e_max);

  m.mu.resize(Eigen::Index(cfg.materials.size()), ni);
  for (std::size_t k = 0; k < cfg.materials.size(); ++k) {
    const auto it = std::find(table.materials.begin(), table.materials.end(), cfg.materials[k]);
    if (it == table.materials.end())
      throw std::invalid_argument("ct.materials: unknown material \"" + cfg.materials[k] + "\"");
    const Vector row = table.mu.row(it - table.materials.begin());
    for (Eigen::Index i = 0; i < ni; ++i)
      m.mu(Eigen::Index(k), i) = interpolate(table.energy, row, m.energies[i]);
  }

  m.beam.resize(ni);
  for (Eigen::Index i = 0; i < ni; ++i)
    m.beam[i] = interpolate(spectrum.energy, spectrum.density, m.energies[i]);
  const double total = m.beam.sum();
  if (!(total > 0.0)) throw std::invalid_argument("ct: beam spectrum is zero on the energy grid");
  m.beam *= cfg.total_intensity / total;

  m.thresholds = cfg.thresholds;
  if (m.thresholds.empty()) {
    // Equal-count quantiles of the piecewise-constant binned spectrum.
    Vector cum(ni + 1);
    cum[0] = 0.0;
    for (Eigen::Index i = 0; i < ni; ++i) cum[i + 1] = cum[i] + m.beam[i] / cfg.total_intensity;
    const Vector edges = Vector::LinSpaced(ni + 1, cfg.e_min, cfg.e_max);
    for (Eigen::Index k = 1; k < cfg.n_windows; ++k)
      m.thresholds.push_back(interpolate(cum, edges, double(k) / double(cfg.n_windows)));
  }

  const Eigen::Index nw = cfg.n_windows;
  auto upper = [&](double e, double thr) {
    if (cfg.blur_width == 0.0) return e >= thr ? 1.0 : 0.0;
    return 1.0 / (1.0 + std::exp(-(e - thr) / cfg.blur_width));
  };
  m.window_weight = Matrix::Zero(nw, ni);
  for (Eigen::Index i = 0; i < ni; ++i) {
    const double e = m.energies[i];
    double prev = 1.0, used = 0.0;
    for (Eigen::Index w = 0; w + 1 < nw; ++w) {
      const double up = upper(e, m.thresholds[std::size_t(w)]);
      m.window_weight(w, i) = prev - up;
      used += m.window_weight(w, i);
      prev = up;
    }
    m.window_weight(nw - 1, i) = 1.0 - used;
  }
  m.S = m.window_weight.array().rowwise() * m.beam.transpose().array();
  m.ray_scale = Vector::Ones(n_rays);
  return m;
}

// ---------------------------------------------------------------------------
// Measurements and loss

Matrix expected_counts(const SpectralModel& model, const RowMatrix& y) {
  if (y.cols() != model.n_materials()) throw DimensionError("expected_counts: material mismatch");
  if (y.rows() != model.ray_scale.size()) throw DimensionError("expected_counts: ray mismatch");
  const Matrix atten = (-(y * model.mu)).array().exp();  // rays x energies
  Matrix means = model.S * atten.transpose();              // windows x rays
  means.array().rowwise() *= model.ray_scale.transpose().array();
  return means;
}

CountMatrix sample_poisson(const Matrix& means, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  CountMatrix c(means.rows(), means.cols());
  for (Eigen::Index l = 0; l < means.cols(); ++l)
    for (Eigen::Index w = 0; w < means.rows(); ++w) {
      const double mean = means(w, l);
      if (!(mean >= 0.0) || !std::isfinite(mean))
        throw std::domain_error("sample_poisson: invalid mean " + std::to_string(mean));
      if (mean == 0.0) {
        c(w, l) = 0;
        continue;
      }
      std::poisson_distribution<std::int64_t> pois(mean);
      c(w, l) = pois(gen);
    }
  return c;
}

CountMatrix forward_counts(const SpectralModel& model, const SparseMatrix& P, const RowMatrix& x,
                           std::uint64_t seed) {
  if (x.rows() != P.cols()) throw DimensionError("forward_counts: image has wrong pixel count");
  const RowMatrix y = P * x;
  return sample_poisson(expected_counts(model, y), seed);
}

namespace {

void check_loss_dims(const SpectralModel& model, const RowMatrix& y, const CountMatrix& counts) {
  if (y.cols() != model.n_materials()) throw DimensionError("loss: material mismatch");
  if (y.rows() != model.ray_scale.size() || counts.cols() != y.rows() ||
      counts.rows() != model.n_windows())
    throw DimensionError("loss: ray/window mismatch");
}

}  // namespace

LossParts loss_parts(const SpectralModel& model, const RowMatrix& y, const CountMatrix& counts,
                     bool with_hessians) {
  check_loss_dims(model, y, counts);
  const Eigen::Index nl = y.rows(), nm = y.cols();
  LossParts out;
  out.grad_c.resize(nl, nm);
  out.grad_d.resize(nl, nm);
  if (with_hessians) out.hess_c.reserve(std::size_t(nl));
  detail::RayKernel k(model);
  for (Eigen::Index l = 0; l < nl; ++l) {
    k.eval(y.row(l).data(), model.ray_scale[l], with_hessians, true);
    for (Eigen::Index w = 0; w < k.means.size(); ++w)
      if (!(k.means[w] > 0.0))
        throw std::domain_error("loss: nonpositive mean on ray " + std::to_string(l));
    const auto col = counts.col(l);
    out.g_c += k.gc;
    out.g_d += k.gd_value(col);
    out.grad_c.row(l) = k.grad_c.transpose();
    out.grad_d.row(l) = k.gd_grad(col).transpose();
    if (with_hessians) out.hess_c.emplace_back(k.hess_c);
  }
  return out;
}

double loss(const SpectralModel& model, const RowMatrix& y, const CountMatrix& counts) {
  check_loss_dims(model, y, counts);
  detail::RayKernel k(model);
  double total = 0.0;
  for (Eigen::Index l = 0; l < y.rows(); ++l) {
    k.eval(y.row(l).data(), model.ray_scale[l], false, true);
    total += k.gc + k.gd_value(counts.col(l));
  }
  return total;
}

RowMatrix loss_gradient(const SpectralModel& model, const RowMatrix& y, const CountMatrix& counts) {
  check_loss_dims(model, y, counts);
  detail::RayKernel k(model);
  RowMatrix g(y.rows(), y.cols());
  for (Eigen::Index l = 0; l < y.rows(); ++l) {
    k.eval(y.row(l).data(), model.ray_scale[l], false, true);
    g.row(l) = (k.grad_c + k.gd_grad(counts.col(l))).transpose();
  }
  return g;
}

RowMatrix loss_gradient_d(const SpectralModel& model, const RowMatrix& y,
                          const CountMatrix& counts) {
  check_loss_dims(model, y, counts);
  detail::RayKernel k(model);
  RowMatrix g(y.rows(), y.cols());
  for (Eigen::Index l = 0; l < y.rows(); ++l) {
    k.eval(y.row(l).data(), model.ray_scale[l], false, true);
    g.row(l) = k.gd_grad(counts.col(l)).transpose();
  }
  return g;
}

double saturated_loss(const CountMatrix& counts) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < counts.cols(); ++j)
    for (Eigen::Index i = 0; i < counts.rows(); ++i) {
      const double c = double(counts(i, j));
      s += c > 0.0 ? c - c * std::log(c) : 0.0;
    }
  return s;
}

// ---------------------------------------------------------------------------
// Phantoms and image output

RowMatrix builtin_phantom(const Geometry& g) {
  g.validate();
  const double w = g.width(), h = g.height(), ext = std::min(w, h);
  struct Disk {
    double cx, cy, r;
  };
  const Disk body{0.0, 0.0, 0.45 * ext};
  const Disk rod{-0.2 * ext, 0.1 * ext, 0.12 * ext};
  const Disk insert{0.2 * ext, -0.15 * ext, 0.1 * ext};
  constexpr double kGadolinium = 0.005;
  constexpr int kSub = 4;
  auto inside = [](const Disk& d, double x, double y) {
    return (x - d.cx) * (x - d.cx) + (y - d.cy) * (y - d.cy) < d.r * d.r;
  };

  RowMatrix x = RowMatrix::Zero(g.n_pixels(), 3);
  for (Eigen::Index iy = 0; iy < g.ny; ++iy)
    for (Eigen::Index ix = 0; ix < g.nx; ++ix) {
      double pm = 0, al = 0, gd = 0;
      for (int sy = 0; sy < kSub; ++sy)
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = -0.5 * w + (double(ix) + (sx + 0.5) / kSub) * g.pixel_size;
          const double py = -0.5 * h + (double(iy) + (sy + 0.5) / kSub) * g.pixel_size;
          if (inside(rod, px, py)) {
            al += 1.0;
          } else if (inside(body, px, py)) {
            pm += 1.0;
            if (inside(insert, px, py)) gd += kGadolinium;
          }
        }
      const double inv = 1.0 / (kSub * kSub);
      x.row(iy * g.nx + ix) << pm * inv, al * inv, gd * inv;
    }
  return x;
}

RowMatrix read_phantom(std::istream& is, const Geometry& g, Eigen::Index n_materials) {
  RowMatrix x(g.n_pixels(), n_materials);
  for (Eigen::Index m = 0; m < n_materials; ++m)
    for (Eigen::Index k = 0; k < g.n_pixels(); ++k)
      if (!(is >> x(k, m)))
        throw std::runtime_error("phantom: expected " + std::to_string(n_materials) + " blocks of " +
                                 std::to_string(g.ny) + "x" + std::to_string(g.nx) + " values");
  if (!x.allFinite()) throw std::runtime_error("phantom: non-finite value");
  return x;
}

void write_image(std::ostream& os, const Geometry& g, const RowMatrix& x, Eigen::Index material) {
  for (Eigen::Index iy = 0; iy < g.ny; ++iy) {
    for (Eigen::Index ix = 0; ix < g.nx; ++ix) {
      if (ix) os << ' ';
      os << x(iy * g.nx + ix, material);
    }
    os << '\n';
  }
}

void write_pgm(std::ostream& os, const Geometry& g, const RowMatrix& x, Eigen::Index material) {
  const double hi = std::max(x.col(material).maxCoeff(), 1e-300);
  os << "P5\n" << g.nx << ' ' << g.ny << "\n255\n";
  // PGM rows run top to bottom.
  for (Eigen::Index iy = g.ny - 1; iy >= 0; --iy)
    for (Eigen::Index ix = 0; ix < g.nx; ++ix) {
      const double v = std::clamp(x(iy * g.nx + ix, material) / hi, 0.0, 1.0);
      os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
}

}  // namespace lnadmm::ct
