// Spectral photon-counting CT forward model.
//
// A 2-D parallel-beam scan of an nx x ny pixel grid (centered at the origin)
// holding n_m material density maps. Ray l integrates each map into
// y_{lm} = (P x)_{lm}; window w of ray l counts
//
//   C_{wl} ~ Poisson( sum_i S_{wli} exp(-sum_m mu_{mi} y_{lm}) ).
//
// Images and projections are row-major (pixels or rays) x materials.
#ifndef LNADMM_CT_FORWARD_HPP
#define LNADMM_CT_FORWARD_HPP

#include "lnadmm/numerics.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace lnadmm::ct {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct Geometry {
  Eigen::Index nx = 25;
  Eigen::Index ny = 25;
  double pixel_size = 0.4;  // cm
  Eigen::Index n_angles = 50;
  Eigen::Index n_detectors = 50;
  /// Width of the detector row in cm; <= 0 selects the grid diagonal.
  double detector_span = 0.0;

  void validate() const;
  Eigen::Index n_pixels() const { return nx * ny; }
  Eigen::Index n_rays() const { return n_angles * n_detectors; }
  double width() const { return double(nx) * pixel_size; }
  double height() const { return double(ny) * pixel_size; }
  double span() const;
  /// Ray l = a * n_detectors + j: angle pi*a/n_angles, signed offset of
  /// detector cell center j from the rotation axis.
  double ray_angle(Eigen::Index l) const;
  double ray_offset(Eigen::Index l) const;
};

/// Pixel k = iy * nx + ix covers [x0 + ix*ps, x0 + (ix+1)*ps) x [y0 + iy*ps, ...)
/// with (x0, y0) the lower-left grid corner. The ray with angle theta and
/// offset s is { s*(-sin theta, cos theta) + t*(cos theta, sin theta) }.
///
/// Returns (pixel, intersection length) pairs in traversal order. Crossing
/// parameters with every grid line are merged and each segment is assigned
/// to the pixel containing its midpoint, which resolves ties on pixel
/// boundaries toward the lower/left pixel edge.
std::vector<std::pair<Eigen::Index, double>> trace_ray(const Geometry& g, double angle,
                                                       double offset);

/// Length of the ray's chord through the grid bounding box.
double chord_length(const Geometry& g, double angle, double offset);

/// n_rays x n_pixels intersection-length matrix. Rays missing the grid have
/// empty rows.
SparseMatrix build_projector(const Geometry& g);

struct AttenuationTable {
  std::vector<std::string> materials;
  Vector energy;  // keV, strictly increasing
  Matrix mu;      // materials x energies
};
/// Text: optional '#' comment lines, header "energy_keV mu_<name> ...", then
/// one row per energy.
AttenuationTable read_attenuation_table(std::istream& is);
AttenuationTable read_attenuation_table(const std::string& path);

struct Spectrum {
  Vector energy;
  Vector density;
};
/// Text: optional '#' comments, header "energy_keV density", one row per energy.
Spectrum read_spectrum(std::istream& is);
Spectrum read_spectrum(const std::string& path);

/// Piecewise-linear interpolation of (xs, ys) at x, clamped at the ends.
double interpolate(const Vector& xs, const Vector& ys, double x);

struct SpectralConfig {
  std::vector<std::string> materials{"pmma", "aluminum", "gadolinium"};
  double e_min = 20.0;
  double e_max = 120.0;
  Eigen::Index n_energies = 100;
  Eigen::Index n_windows = 3;
  /// Increasing window thresholds (n_windows - 1 values, keV); empty selects
  /// equal-count quantiles of the beam spectrum.
  std::vector<double> thresholds;
  /// Logistic scale of the threshold transitions in keV; 0 gives crisp windows.
  double blur_width = 4.0;
  /// Photons per ray summed over all energies.
  double total_intensity = 1e6;
  std::string attenuation_file;  // empty: bundled table
  std::string spectrum_file;     // empty: bundled spectrum
};

struct SpectralModel {
  Vector energies;       // bin centers, n_i
  Matrix mu;             // n_m x n_i
  Vector beam;           // n_i, sums to total_intensity
  Matrix window_weight;  // n_w x n_i, columns sum to one
  Matrix S;              // n_w x n_i = window_weight .* beam
  Vector ray_scale;      // per-ray sensitivity multiplier, n_rays
  std::vector<double> thresholds;

  Eigen::Index n_materials() const { return mu.rows(); }
  Eigen::Index n_energies() const { return mu.cols(); }
  Eigen::Index n_windows() const { return S.rows(); }
};

/// Bin-center energy grid, attenuation curves interpolated from the table,
/// beam spectrum normalized to the configured intensity and blurred windows
/// w_1 = 1 - L_1, w_k = L_{k-1} - L_k, and the last window as the complement
/// of the others. Throws on unknown materials or non-increasing thresholds.
SpectralModel build_spectral_model(const SpectralConfig& config, Eigen::Index n_rays);

/// Directory holding the bundled data files.
std::string data_dir();

/// Expected counts (n_w x n_rays) for projections y (n_rays x n_m), using exp.
Matrix expected_counts(const SpectralModel& model, const RowMatrix& y);

/// Independent Poisson draws with the given means from std::mt19937_64(seed).
CountMatrix sample_poisson(const Matrix& means, std::uint64_t seed);

/// Samples counts for image x (n_pixels x n_m) through projector P.
CountMatrix forward_counts(const SpectralModel& model, const SparseMatrix& P, const RowMatrix& x,
                           std::uint64_t seed);

/// Loss pieces for y (n_rays x n_m):
///   g_c(y) = sum_{wl} sum_i S_{wli} qexp(-sum_m mu_{mi} y_{lm})
///   g_d(y) = -sum_{wl} C_{wl} log(sum_i S_{wli} qexp(-sum_m mu_{mi} y_{lm}))
struct LossParts {
  double g_c = 0.0;
  double g_d = 0.0;
  RowMatrix grad_c;
  RowMatrix grad_d;
  std::vector<Matrix> hess_c;  // per-ray n_m x n_m blocks of g_c
};
LossParts loss_parts(const SpectralModel& model, const RowMatrix& y, const CountMatrix& counts,
                     bool with_hessians = true);

/// g_c + g_d.
double loss(const SpectralModel& model, const RowMatrix& y, const CountMatrix& counts);
/// grad (g_c + g_d).
RowMatrix loss_gradient(const SpectralModel& model, const RowMatrix& y, const CountMatrix& counts);
/// Gradient of g_d only.
RowMatrix loss_gradient_d(const SpectralModel& model, const RowMatrix& y,
                          const CountMatrix& counts);
/// sum_{wl} (C - C log C), the exp-model loss with every mean equal to its
/// count. Subtracting it turns the loss into half the Poisson deviance,
/// which is nonnegative wherever qexp agrees with exp.
double saturated_loss(const CountMatrix& counts);

/// Default phantom on a square grid: PMMA disk, an aluminum rod and a
/// gadolinium insert at low concentration, supersampled at the edges.
/// Columns follow materials {pmma, aluminum, gadolinium}.
RowMatrix builtin_phantom(const Geometry& g);

/// Phantom text: one block per material, ny rows of nx values each, rows in
/// order of increasing y; blocks separated by blank lines.
RowMatrix read_phantom(std::istream& is, const Geometry& g, Eigen::Index n_materials);
void write_image(std::ostream& os, const Geometry& g, const RowMatrix& x, Eigen::Index material);
/// 8-bit binary PGM of one material map scaled to [0, max].
void write_pgm(std::ostream& os, const Geometry& g, const RowMatrix& x, Eigen::Index material);

}  // namespace lnadmm::ct

#endif  // LNADMM_CT_FORWARD_HPP
