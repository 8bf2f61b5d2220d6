// spectral.hpp: instantaneous eigensystems of H_Q(s), gap location, adiabaticity
// scale, and the table of Lindblad channels built from sum_i sigma^z_i.

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qapause/linalg.hpp"
#include "qapause/spin_model.hpp"

namespace qapause {

struct EigenSystem {
  double s{0.0};
  RVector energies;  // ascending
  RMatrix vectors;   // columns, orthonormal

  int dim() const { return static_cast<int>(energies.size()); }
};

/// Sorted eigensystem of a real symmetric matrix. Without `previous`, each vector
/// has its largest-magnitude component positive; with `previous`, signs are chosen
/// so that <v_k(prev)|v_k> >= 0.
EigenSystem eigendecompose(const RMatrix& h, const EigenSystem* previous = nullptr, double s = 0.0);

struct GapMinimum {
  double s{0.0};
  double gap{0.0};
};

class GapSearchError : public std::runtime_error {
 public:
  GapSearchError(const std::string& what, std::vector<GapMinimum> minima)
      : std::runtime_error(what), minima_(std::move(minima)) {}
  const std::vector<GapMinimum>& minima() const { return minima_; }

 private:
  std::vector<GapMinimum> minima_;
};

double lowest_gap(const AnnealModel& model, double s);

/// Coarse scan of eps_2 - eps_1 at `scan_step` resolution, then golden-section
/// refinement to |s error| < tol. Throws GapSearchError when the scan shows more than
/// one local minimum or the minimum sits on the range boundary.
GapMinimum locate_min_gap(const AnnealModel& model, double s_lo = 0.0, double s_hi = 1.0,
                          double tol = 1e-7, double scan_step = 1e-3);

/// First s below s_max where the lowest gap equals `level`, by bisection; nullopt if
/// the gap never exceeds `level` on [s_min, s_max].
std::optional<double> gap_crossing_before(const AnnealModel& model, double level, double s_max,
                                          double s_min = 0.0);

/// One Lindblad operator: the (a <- b) transitions sharing a Bohr frequency.
struct JumpChannel {
  double omega{0.0};
  struct Transition {
    int a;
    int b;
    double amplitude;  // <eps_a| sum sigma^z |eps_b>
  };
  std::vector<Transition> transitions;
};

/// Channel 0 is the dephasing operator (omega = 0, diagonal amplitudes); every other
/// channel has a nonzero Bohr frequency omega_ba = eps_b - eps_a.
struct JumpTable {
  RMatrix amplitudes;  // A_ab = <eps_a| sum sigma^z |eps_b> in the eigenbasis
  std::vector<JumpChannel> channels;
  std::vector<int> channel_of;  // channel index of ordered pair (a, b), row-major

  int dim() const { return static_cast<int>(amplitudes.rows()); }
  int channel_index(int a, int b) const { return channel_of[static_cast<std::size_t>(a * dim() + b)]; }
  /// L_alpha as a dense matrix in the eigenbasis.
  RMatrix channel_matrix(std::size_t alpha) const;
};

/// Frequencies closer than rel_tol * (spectral width) are grouped into one channel.
JumpTable build_jump_table(const EigenSystem& eig, const RVector& coupling_diagonal,
                           double rel_tol = 1e-9);

/// h = max over the s-grid and (a, b) of |<eps_a| dH_Q/ds |eps_b>|.
double adiabatic_h(const AnnealModel& model, int grid_points = 2001);

/// Eigensystems on a uniform s-grid with sign continuity between neighbours.
class SpectralGrid {
 public:
  SpectralGrid(const AnnealModel& model, int points);

  const std::vector<EigenSystem>& systems() const { return systems_; }
  double spacing() const { return spacing_; }
  const EigenSystem& nearest(double s) const;

 private:
  std::vector<EigenSystem> systems_;
  double spacing_{0.0};
};

}  // namespace qapause
