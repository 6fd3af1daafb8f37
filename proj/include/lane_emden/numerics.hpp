#pragma once

/// Shared numerical kernels: an adaptive eighth-order Runge-Kutta integrator
/// with dense output, Gauss rules, damped Newton, bisection, Lambert W_{-1}
/// and Richardson extrapolation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/lambert_w.hpp>

#include "lane_emden/errors.hpp"

namespace lane_emden {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kMachEps = std::numeric_limits<double>::epsilon();

// ---------------------------------------------------------------------------
// ODE integration
// ---------------------------------------------------------------------------

using State = std::vector<double>;

/// Right-hand side y' = f(r, y); writes n derivatives into dy.
using OdeRhs = std::function<void(double r, const double* y, double* dy)>;

/// Optional early-exit predicate, checked after every accepted step.
using OdeStop = std::function<bool(double r, const double* y)>;

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_init = 0.0;  ///< 0 selects the step automatically
  double h_max = 0.0;   ///< 0 means unbounded
  std::size_t max_steps = 500000;
  double beta = 0.04;   ///< PI stabilisation exponent
};

/// Piecewise seventh-order dense representation of an ODE solution.
class Trajectory {
public:
  Trajectory() = default;
  explicit Trajectory(std::size_t n) : n_(n) {}

  std::size_t dim() const { return n_; }
  std::size_t steps() const { return t_.empty() ? 0 : t_.size() - 1; }
  double r_begin() const { return t_.front(); }
  double r_end() const { return t_.back(); }
  /// True when the stop predicate ended integration before r1.
  bool stopped() const { return stopped_; }

  /// Step endpoints, strictly increasing.
  const std::vector<double>& nodes() const { return t_; }

  /// Stored state at node j (exactly the integrator's stepped value).
  State node_state(std::size_t j) const {
    return State(y_.begin() + static_cast<std::ptrdiff_t>(j * n_),
                 y_.begin() + static_cast<std::ptrdiff_t>((j + 1) * n_));
  }
  double node_value(std::size_t j, std::size_t i) const { return y_[j * n_ + i]; }

  /// Dense output at r in [r_begin, r_end].
  State operator()(double r) const {
    State out(n_);
    eval(r, out.data());
    return out;
  }

  double component(double r, std::size_t i) const {
    std::size_t j;
    double s;
    if (locate(r, j, s)) return y_[j * n_ + i];
    return interp(j, s, i);
  }

  void eval(double r, double* out) const {
    std::size_t j;
    double s;
    if (locate(r, j, s)) {
      std::copy_n(y_.begin() + static_cast<std::ptrdiff_t>(j * n_), n_, out);
      return;
    }
    for (std::size_t i = 0; i < n_; ++i) out[i] = interp(j, s, i);
  }

  // Builder interface used by the integrator.
  void push_node(double t, const double* y) {
    t_.push_back(t);
    y_.insert(y_.end(), y, y + n_);
  }
  void push_coefficients(const std::array<std::vector<double>, 8>& rc) {
    for (const auto& c : rc) coef_.insert(coef_.end(), c.begin(), c.end());
  }
  void mark_stopped() { stopped_ = true; }

private:
  // Returns true when r coincides with a node (index in j).
  bool locate(double r, std::size_t& j, double& s) const {
    if (t_.empty()) throw DomainError("empty trajectory");
    if (r < t_.front() || r > t_.back())
      throw DomainError("dense output requested outside the integrated range");
    auto it = std::upper_bound(t_.begin(), t_.end(), r);
    std::size_t k = static_cast<std::size_t>(it - t_.begin());
    if (k > 0 && t_[k - 1] == r) {
      j = k - 1;
      return true;
    }
    if (k >= t_.size()) {
      j = t_.size() - 1;
      return true;
    }
    j = k - 1;
    s = (r - t_[j]) / (t_[j + 1] - t_[j]);
    return false;
  }

  double interp(std::size_t j, double s, std::size_t i) const {
    const double* c = coef_.data() + j * 8 * n_;
    const double s1 = 1.0 - s;
    auto rc = [&](int m) { return c[static_cast<std::size_t>(m) * n_ + i]; };
    return rc(0) + s * (rc(1) + s1 * (rc(2) + s * (rc(3) + s1 * (rc(4) + s * (rc(5) + s1 * (rc(6) + s * rc(7)))))));
  }

  std::size_t n_ = 0;
  std::vector<double> t_;
  std::vector<double> y_;
  std::vector<double> coef_;
  bool stopped_ = false;
};

namespace detail {

// Dormand-Prince 8(5,3) coefficients (Hairer, Norsett & Wanner).
struct Dop853 {
  static constexpr double c2 = 0.526001519587677318785587544488E-01;
  static constexpr double c3 = 0.789002279381515978178381316732E-01;
  static constexpr double c4 = 0.118350341907227396726757197510E+00;
  static constexpr double c5 = 0.281649658092772603273242802490E+00;
  static constexpr double c6 = 0.333333333333333333333333333333E+00;
  static constexpr double c7 = 0.25E+00;
  static constexpr double c8 = 0.307692307692307692307692307692E+00;
  static constexpr double c9 = 0.651282051282051282051282051282E+00;
  static constexpr double c10 = 0.6E+00;
  static constexpr double c11 = 0.857142857142857142857142857142E+00;
  static constexpr double c14 = 0.1E+00;
  static constexpr double c15 = 0.2E+00;
  static constexpr double c16 = 0.777777777777777777777777777778E+00;

  static constexpr double b1 = 5.42937341165687622380535766363E-2;
  static constexpr double b6 = 4.45031289275240888144113950566E0;
  static constexpr double b7 = 1.89151789931450038304281599044E0;
  static constexpr double b8 = -5.8012039600105847814672114227E0;
  static constexpr double b9 = 3.1116436695781989440891606237E-1;
  static constexpr double b10 = -1.52160949662516078556178806805E-1;
  static constexpr double b11 = 2.01365400804030348374776537501E-1;
  static constexpr double b12 = 4.47106157277725905176885569043E-2;

  static constexpr double bhh1 = 0.244094488188976377952755905512E+00;
  static constexpr double bhh2 = 0.733846688281611857341361741547E+00;
  static constexpr double bhh3 = 0.220588235294117647058823529412E-01;

  static constexpr double er1 = 0.1312004499419488073250102996E-01;
  static constexpr double er6 = -0.1225156446376204440720569753E+01;
  static constexpr double er7 = -0.4957589496572501915214079952E+00;
  static constexpr double er8 = 0.1664377182454986536961530415E+01;
  static constexpr double er9 = -0.3503288487499736816886487290E+00;
  static constexpr double er10 = 0.3341791187130174790297318841E+00;
  static constexpr double er11 = 0.8192320648511571246570742613E-01;
  static constexpr double er12 = -0.2235530786388629525884427845E-01;

  static constexpr double a21 = 5.26001519587677318785587544488E-2;
  static constexpr double a31 = 1.97250569845378994544595329183E-2;
  static constexpr double a32 = 5.91751709536136983633785987549E-2;
  static constexpr double a41 = 2.95875854768068491816892993775E-2;
  static constexpr double a43 = 8.87627564304205475450678981324E-2;
  static constexpr double a51 = 2.41365134159266685502369798665E-1;
  static constexpr double a53 = -8.84549479328286085344864962717E-1;
  static constexpr double a54 = 9.24834003261792003115737966543E-1;
  static constexpr double a61 = 3.7037037037037037037037037037E-2;
  static constexpr double a64 = 1.70828608729473871279604482173E-1;
  static constexpr double a65 = 1.25467687566822425016691814123E-1;
  static constexpr double a71 = 3.7109375E-2;
  static constexpr double a74 = 1.70252211019544039314978060272E-1;
  static constexpr double a75 = 6.02165389804559606850219397283E-2;
  static constexpr double a76 = -1.7578125E-2;
  static constexpr double a81 = 3.70920001185047927108779319836E-2;
  static constexpr double a84 = 1.70383925712239993810214054705E-1;
  static constexpr double a85 = 1.07262030446373284651809199168E-1;
  static constexpr double a86 = -1.53194377486244017527936158236E-2;
  static constexpr double a87 = 8.27378916381402288758473766002E-3;
  static constexpr double a91 = 6.24110958716075717114429577812E-1;
  static constexpr double a94 = -3.36089262944694129406857109825E0;
  static constexpr double a95 = -8.68219346841726006818189891453E-1;
  static constexpr double a96 = 2.75920996994467083049415600797E1;
  static constexpr double a97 = 2.01540675504778934086186788979E1;
  static constexpr double a98 = -4.34898841810699588477366255144E1;
  static constexpr double a101 = 4.77662536438264365890433908527E-1;
  static constexpr double a104 = -2.48811461997166764192642586468E0;
  static constexpr double a105 = -5.90290826836842996371446475743E-1;
  static constexpr double a106 = 2.12300514481811942347288949897E1;
  static constexpr double a107 = 1.52792336328824235832596922938E1;
  static constexpr double a108 = -3.32882109689848629194453265587E1;
  static constexpr double a109 = -2.03312017085086261358222928593E-2;
  static constexpr double a111 = -9.3714243008598732571704021658E-1;
  static constexpr double a114 = 5.18637242884406370830023853209E0;
  static constexpr double a115 = 1.09143734899672957818500254654E0;
  static constexpr double a116 = -8.14978701074692612513997267357E0;
  static constexpr double a117 = -1.85200656599969598641566180701E1;
  static constexpr double a118 = 2.27394870993505042818970056734E1;
  static constexpr double a119 = 2.49360555267965238987089396762E0;
  static constexpr double a1110 = -3.0467644718982195003823669022E0;
  static constexpr double a121 = 2.27331014751653820792359768449E0;
  static constexpr double a124 = -1.05344954667372501984066689879E1;
  static constexpr double a125 = -2.00087205822486249909675718444E0;
  static constexpr double a126 = -1.79589318631187989172765950534E1;
  static constexpr double a127 = 2.79488845294199600508499808837E1;
  static constexpr double a128 = -2.85899827713502369474065508674E0;
  static constexpr double a129 = -8.87285693353062954433549289258E0;
  static constexpr double a1210 = 1.23605671757943030647266201528E1;
  static constexpr double a1211 = 6.43392746015763530355970484046E-1;

  static constexpr double a141 = 5.61675022830479523392909219681E-2;
  static constexpr double a147 = 2.53500210216624811088794765333E-1;
  static constexpr double a148 = -2.46239037470802489917441475441E-1;
  static constexpr double a149 = -1.24191423263816360469010140626E-1;
  static constexpr double a1410 = 1.5329179827876569731206322685E-1;
  static constexpr double a1411 = 8.20105229563468988491666602057E-3;
  static constexpr double a1412 = 7.56789766054569976138603589584E-3;
  static constexpr double a1413 = -8.298E-3;
  static constexpr double a151 = 3.18346481635021405060768473261E-2;
  static constexpr double a156 = 2.83009096723667755288322961402E-2;
  static constexpr double a157 = 5.35419883074385676223797384372E-2;
  static constexpr double a158 = -5.49237485713909884646569340306E-2;
  static constexpr double a1511 = -1.08347328697249322858509316994E-4;
  static constexpr double a1512 = 3.82571090835658412954920192323E-4;
  static constexpr double a1513 = -3.40465008687404560802977114492E-4;
  static constexpr double a1514 = 1.41312443674632500278074618366E-1;
  static constexpr double a161 = -4.28896301583791923408573538692E-1;
  static constexpr double a166 = -4.69762141536116384314449447206E0;
  static constexpr double a167 = 7.68342119606259904184240953878E0;
  static constexpr double a168 = 4.06898981839711007970213554331E0;
  static constexpr double a169 = 3.56727187455281109270669543021E-1;
  static constexpr double a1613 = -1.39902416515901462129418009734E-3;
  static constexpr double a1614 = 2.9475147891527723389556272149E0;
  static constexpr double a1615 = -9.15095847217987001081870187138E0;

  static constexpr double d41 = -0.84289382761090128651353491142E+01;
  static constexpr double d46 = 0.56671495351937776962531783590E+00;
  static constexpr double d47 = -0.30689499459498916912797304727E+01;
  static constexpr double d48 = 0.23846676565120698287728149680E+01;
  static constexpr double d49 = 0.21170345824450282767155149946E+01;
  static constexpr double d410 = -0.87139158377797299206789907490E+00;
  static constexpr double d411 = 0.22404374302607882758541771650E+01;
  static constexpr double d412 = 0.63157877876946881815570249290E+00;
  static constexpr double d413 = -0.88990336451333310820698117400E-01;
  static constexpr double d414 = 0.18148505520854727256656404962E+02;
  static constexpr double d415 = -0.91946323924783554000451984436E+01;
  static constexpr double d416 = -0.44360363875948939664310572000E+01;
  static constexpr double d51 = 0.10427508642579134603413151009E+02;
  static constexpr double d56 = 0.24228349177525818288430175319E+03;
  static constexpr double d57 = 0.16520045171727028198505394887E+03;
  static constexpr double d58 = -0.37454675472269020279518312152E+03;
  static constexpr double d59 = -0.22113666853125306036270938578E+02;
  static constexpr double d510 = 0.77334326684722638389603898808E+01;
  static constexpr double d511 = -0.30674084731089398182061213626E+02;
  static constexpr double d512 = -0.93321305264302278729567221706E+01;
  static constexpr double d513 = 0.15697238121770843886131091075E+02;
  static constexpr double d514 = -0.31139403219565177677282850411E+02;
  static constexpr double d515 = -0.93529243588444783865713862664E+01;
  static constexpr double d516 = 0.35816841486394083752465898540E+02;
  static constexpr double d61 = 0.19985053242002433820987653617E+02;
  static constexpr double d66 = -0.38703730874935176555105901742E+03;
  static constexpr double d67 = -0.18917813819516756882830838328E+03;
  static constexpr double d68 = 0.52780815920542364900561016686E+03;
  static constexpr double d69 = -0.11573902539959630126141871134E+02;
  static constexpr double d610 = 0.68812326946963000169666922661E+01;
  static constexpr double d611 = -0.10006050966910838403183860980E+01;
  static constexpr double d612 = 0.77771377980534432092869265740E+00;
  static constexpr double d613 = -0.27782057523535084065932004339E+01;
  static constexpr double d614 = -0.60196695231264120758267380846E+02;
  static constexpr double d615 = 0.84320405506677161018159903784E+02;
  static constexpr double d616 = 0.11992291136182789328035130030E+02;
  static constexpr double d71 = -0.25693933462703749003312586129E+02;
  static constexpr double d76 = -0.15418974869023643374053993627E+03;
  static constexpr double d77 = -0.23152937917604549567536039109E+03;
  static constexpr double d78 = 0.35763911791061412378285349910E+03;
  static constexpr double d79 = 0.93405324183624310003907691704E+02;
  static constexpr double d710 = -0.37458323136451633156875139351E+02;
  static constexpr double d711 = 0.10409964950896230045147246184E+03;
  static constexpr double d712 = 0.29840293426660503123344363579E+02;
  static constexpr double d713 = -0.43533456590011143754432175058E+02;
  static constexpr double d714 = 0.96324553959188282948394950600E+02;
  static constexpr double d715 = -0.39177261675615439165231486172E+02;
  static constexpr double d716 = -0.14972683625798562581422125276E+03;
};

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace detail

/// Integrates y' = f(r, y) from r0 to r1 with local error control.
/// Throws StepFailure when the step size underflows or the step budget runs
/// out. When `stop` returns true after an accepted step the trajectory ends
/// there and Trajectory::stopped() is set.
inline Trajectory integrate_ode(const OdeRhs& f, double r0, double r1, const State& y0,
                                const OdeOptions& opt = {}, const OdeStop& stop = {}) {
  using C = detail::Dop853;
  if (!(r1 > r0)) throw DomainError("integrate_ode requires r1 > r0");
  if (!(opt.rtol > 0.0) || opt.atol < 0.0) throw DomainError("tolerances must be positive");
  const std::size_t n = y0.size();
  Trajectory traj(n);

  std::vector<double> y = y0, ynew(n), tmp(n);
  std::array<std::vector<double>, 16> k;
  for (auto& v : k) v.assign(n, 0.0);
  std::array<std::vector<double>, 8> rc;
  for (auto& v : rc) v.assign(n, 0.0);

  auto sk = [&](double a, double b) {
    return opt.atol + opt.rtol * std::max(std::fabs(a), std::fabs(b));
  };

  double t = r0;
  traj.push_node(t, y.data());
  f(t, y.data(), k[0].data());
  if (!detail::all_finite(k[0])) throw StepFailure("non-finite derivative at start");

  const double hmax = opt.h_max > 0.0 ? opt.h_max : (r1 - r0);
  double h = opt.h_init;
  if (h <= 0.0) {
    // Hairer's starting step heuristic.
    double dnf = 0.0, dny = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = opt.atol + opt.rtol * std::fabs(y[i]);
      dnf += (k[0][i] / s) * (k[0][i] / s);
      dny += (y[i] / s) * (y[i] / s);
    }
    h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, hmax);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k[0][i];
    f(t + h, tmp.data(), k[1].data());
    double der2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = (k[1][i] - k[0][i]) / (opt.atol + opt.rtol * std::fabs(y[i]));
      der2 += s * s;
    }
    der2 = std::sqrt(der2) / h;
    double der12 = std::max(std::fabs(der2), std::sqrt(dnf));
    double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.125);
    h = std::min({100.0 * h, h1, hmax});
    if (!std::isfinite(h) || h <= 0.0) h = 1e-6 * (r1 - r0);
  }

  const double expo1 = 1.0 / 8.0 - opt.beta * 0.2;
  const double facc1 = 1.0 / 0.333, facc2 = 1.0 / 6.0, safe = 0.9;
  double facold = 1e-4;
  bool reject = false, last = false;
  std::size_t nstep = 0;

  while (true) {
    if (nstep++ > opt.max_steps) throw StepFailure("step budget exhausted at r=" + std::to_string(t));
    if (0.1 * std::fabs(h) <= std::fabs(t) * kMachEps || h <= 0.0)
      throw StepFailure("step size underflow at r=" + std::to_string(t));
    last = false;
    if (t + 1.01 * h >= r1) {
      h = r1 - t;
      last = true;
    }

    auto stage = [&](double c, auto&& combo, std::vector<double>& out) {
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * combo(i);
      f(t + c * h, tmp.data(), out.data());
    };
    // k[0..11] hold stages 1..12.
    stage(C::c2, [&](std::size_t i) { return C::a21 * k[0][i]; }, k[1]);
    stage(C::c3, [&](std::size_t i) { return C::a31 * k[0][i] + C::a32 * k[1][i]; }, k[2]);
    stage(C::c4, [&](std::size_t i) { return C::a41 * k[0][i] + C::a43 * k[2][i]; }, k[3]);
    stage(C::c5, [&](std::size_t i) { return C::a51 * k[0][i] + C::a53 * k[2][i] + C::a54 * k[3][i]; }, k[4]);
    stage(C::c6, [&](std::size_t i) { return C::a61 * k[0][i] + C::a64 * k[3][i] + C::a65 * k[4][i]; }, k[5]);
    stage(C::c7, [&](std::size_t i) {
      return C::a71 * k[0][i] + C::a74 * k[3][i] + C::a75 * k[4][i] + C::a76 * k[5][i];
    }, k[6]);
    stage(C::c8, [&](std::size_t i) {
      return C::a81 * k[0][i] + C::a84 * k[3][i] + C::a85 * k[4][i] + C::a86 * k[5][i] + C::a87 * k[6][i];
    }, k[7]);
    stage(C::c9, [&](std::size_t i) {
      return C::a91 * k[0][i] + C::a94 * k[3][i] + C::a95 * k[4][i] + C::a96 * k[5][i] +
             C::a97 * k[6][i] + C::a98 * k[7][i];
    }, k[8]);
    stage(C::c10, [&](std::size_t i) {
      return C::a101 * k[0][i] + C::a104 * k[3][i] + C::a105 * k[4][i] + C::a106 * k[5][i] +
             C::a107 * k[6][i] + C::a108 * k[7][i] + C::a109 * k[8][i];
    }, k[9]);
    stage(C::c11, [&](std::size_t i) {
      return C::a111 * k[0][i] + C::a114 * k[3][i] + C::a115 * k[4][i] + C::a116 * k[5][i] +
             C::a117 * k[6][i] + C::a118 * k[7][i] + C::a119 * k[8][i] + C::a1110 * k[9][i];
    }, k[10]);
    stage(1.0, [&](std::size_t i) {
      return C::a121 * k[0][i] + C::a124 * k[3][i] + C::a125 * k[4][i] + C::a126 * k[5][i] +
             C::a127 * k[6][i] + C::a128 * k[7][i] + C::a129 * k[8][i] + C::a1210 * k[9][i] +
             C::a1211 * k[10][i];
    }, k[11]);

    std::vector<double>& incr = k[15];  // scratch: weighted slope
    for (std::size_t i = 0; i < n; ++i) {
      incr[i] = C::b1 * k[0][i] + C::b6 * k[5][i] + C::b7 * k[6][i] + C::b8 * k[7][i] +
                C::b9 * k[8][i] + C::b10 * k[9][i] + C::b11 * k[10][i] + C::b12 * k[11][i];
      ynew[i] = y[i] + h * incr[i];
    }

    double err = 0.0, err2 = 0.0;
    bool finite = detail::all_finite(ynew);
    if (finite) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = 1.0 / sk(y[i], ynew[i]);
        double e2 = (incr[i] - C::bhh1 * k[0][i] - C::bhh2 * k[8][i] - C::bhh3 * k[11][i]) * s;
        err2 += e2 * e2;
        double e1 = (C::er1 * k[0][i] + C::er6 * k[5][i] + C::er7 * k[6][i] + C::er8 * k[7][i] +
                     C::er9 * k[8][i] + C::er10 * k[9][i] + C::er11 * k[10][i] + C::er12 * k[11][i]) *
                    s;
        err += e1 * e1;
      }
      double deno = err + 0.01 * err2;
      err = std::fabs(h) * err * std::sqrt(1.0 / (deno <= 0.0 ? double(n) : deno * double(n)));
      finite = std::isfinite(err);
    }
    if (!finite) {
      h *= 0.25;
      reject = true;
      continue;
    }

    double fac11 = std::pow(err, expo1);
    double fac = fac11 / std::pow(facold, opt.beta);
    fac = std::max(facc2, std::min(facc1, fac / safe));
    double hnew = h / fac;

    if (err > 1.0) {
      hnew = h / std::min(facc1, fac11 / safe);
      reject = true;
      h = hnew;
      continue;
    }

    // Accepted: FSAL stage 13 and dense output stages 14-16.
    facold = std::max(err, 1e-4);
    std::vector<double>& k13 = k[12];
    f(t + h, ynew.data(), k13.data());
    if (!detail::all_finite(k13)) {
      h *= 0.25;
      reject = true;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double ydiff = ynew[i] - y[i];
      double bspl = h * k[0][i] - ydiff;
      rc[0][i] = y[i];
      rc[1][i] = ydiff;
      rc[2][i] = bspl;
      rc[3][i] = ydiff - h * k13[i] - bspl;
      rc[4][i] = C::d41 * k[0][i] + C::d46 * k[5][i] + C::d47 * k[6][i] + C::d48 * k[7][i] +
                 C::d49 * k[8][i] + C::d410 * k[9][i] + C::d411 * k[10][i] + C::d412 * k[11][i];
      rc[5][i] = C::d51 * k[0][i] + C::d56 * k[5][i] + C::d57 * k[6][i] + C::d58 * k[7][i] +
                 C::d59 * k[8][i] + C::d510 * k[9][i] + C::d511 * k[10][i] + C::d512 * k[11][i];
      rc[6][i] = C::d61 * k[0][i] + C::d66 * k[5][i] + C::d67 * k[6][i] + C::d68 * k[7][i] +
                 C::d69 * k[8][i] + C::d610 * k[9][i] + C::d611 * k[10][i] + C::d612 * k[11][i];
      rc[7][i] = C::d71 * k[0][i] + C::d76 * k[5][i] + C::d77 * k[6][i] + C::d78 * k[7][i] +
                 C::d79 * k[8][i] + C::d710 * k[9][i] + C::d711 * k[10][i] + C::d712 * k[11][i];
    }
    stage(C::c14, [&](std::size_t i) {
      return C::a141 * k[0][i] + C::a147 * k[6][i] + C::a148 * k[7][i] + C::a149 * k[8][i] +
             C::a1410 * k[9][i] + C::a1411 * k[10][i] + C::a1412 * k[11][i] + C::a1413 * k13[i];
    }, k[13]);
    stage(C::c15, [&](std::size_t i) {
      return C::a151 * k[0][i] + C::a156 * k[5][i] + C::a157 * k[6][i] + C::a158 * k[7][i] +
             C::a1511 * k[10][i] + C::a1512 * k[11][i] + C::a1513 * k13[i] + C::a1514 * k[13][i];
    }, k[14]);
    stage(C::c16, [&](std::size_t i) {
      return C::a161 * k[0][i] + C::a166 * k[5][i] + C::a167 * k[6][i] + C::a168 * k[7][i] +
             C::a169 * k[8][i] + C::a1613 * k13[i] + C::a1614 * k[13][i] + C::a1615 * k[14][i];
    }, k[15]);
    for (std::size_t i = 0; i < n; ++i) {
      rc[4][i] = h * (rc[4][i] + C::d413 * k13[i] + C::d414 * k[13][i] + C::d415 * k[14][i] + C::d416 * k[15][i]);
      rc[5][i] = h * (rc[5][i] + C::d513 * k13[i] + C::d514 * k[13][i] + C::d515 * k[14][i] + C::d516 * k[15][i]);
      rc[6][i] = h * (rc[6][i] + C::d613 * k13[i] + C::d614 * k[13][i] + C::d615 * k[14][i] + C::d616 * k[15][i]);
      rc[7][i] = h * (rc[7][i] + C::d713 * k13[i] + C::d714 * k[13][i] + C::d715 * k[14][i] + C::d716 * k[15][i]);
    }

    traj.push_coefficients(rc);
    t = last ? r1 : t + h;
    y.swap(ynew);
    k[0] = k13;
    traj.push_node(t, y.data());

    if (stop && stop(t, y.data())) {
      traj.mark_stopped();
      return traj;
    }
    if (last) return traj;

    hnew = std::min(std::fabs(hnew), hmax);
    if (reject) hnew = std::min(hnew, h);
    reject = false;
    h = hnew;
  }
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
/// Supported n: 7, 10, 15, 20, 25, 30.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre_rule(int n) {
  auto build = [](auto rule) {
    const auto& x = rule.abscissa();
    const auto& w = rule.weights();
    std::vector<double> nodes, weights;
    for (std::size_t i = x.size(); i-- > 0;) {
      if (x[i] == 0.0) continue;
      nodes.push_back(-x[i]);
      weights.push_back(w[i]);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      nodes.push_back(x[i]);
      weights.push_back(w[i]);
    }
    return std::make_pair(nodes, weights);
  };
  using boost::math::quadrature::gauss;
  switch (n) {
    case 7: return build(gauss<double, 7>());
    case 10: return build(gauss<double, 10>());
    case 15: return build(gauss<double, 15>());
    case 20: return build(gauss<double, 20>());
    case 25: return build(gauss<double, 25>());
    case 30: return build(gauss<double, 30>());
    default: throw DomainError("unsupported Gauss-Legendre order " + std::to_string(n));
  }
}

/// A one-dimensional quadrature grid: nodes strictly increasing with positive weights.
struct Grid1D {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }

  double integrate(std::span<const double> values) const {
    if (values.size() != nodes.size()) throw DomainError("value count does not match grid");
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += weights[i] * values[i];
    return s;
  }

  template <class F>
  double integrate(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }

  /// Composite Gauss-Legendre grid over consecutive breakpoints.
  static Grid1D composite(std::span<const double> breaks, int order = 20) {
    if (breaks.size() < 2) throw DomainError("composite grid needs two breakpoints");
    auto [x, w] = gauss_legendre_rule(order);
    Grid1D g;
    for (std::size_t j = 0; j + 1 < breaks.size(); ++j) {
      double a = breaks[j], b = breaks[j + 1];
      if (!(b > a)) throw DomainError("breakpoints must increase");
      double m = 0.5 * (a + b), r = 0.5 * (b - a);
      for (std::size_t i = 0; i < x.size(); ++i) {
        g.nodes.push_back(m + r * x[i]);
        g.weights.push_back(r * w[i]);
      }
    }
    return g;
  }
};

/// Breakpoints a = b0 < ... < bm = b, geometrically spaced.
inline std::vector<double> geometric_breaks(double a, double b, int panels) {
  if (!(a > 0.0) || !(b > a) || panels < 1) throw DomainError("invalid geometric breaks");
  std::vector<double> out(static_cast<std::size_t>(panels) + 1);
  double la = std::log(a), lb = std::log(b);
  for (int i = 0; i <= panels; ++i) out[static_cast<std::size_t>(i)] = std::exp(la + (lb - la) * i / panels);
  out.front() = a;
  out.back() = b;
  return out;
}

/// Breakpoints a = b0 < ... < bm = b, uniformly spaced.
inline std::vector<double> uniform_breaks(double a, double b, int panels) {
  if (!(b > a) || panels < 1) throw DomainError("invalid uniform breaks");
  std::vector<double> out(static_cast<std::size_t>(panels) + 1);
  for (int i = 0; i <= panels; ++i) out[static_cast<std::size_t>(i)] = a + (b - a) * i / panels;
  out.back() = b;
  return out;
}

struct QuadResult {
  double value;
  double error;
};

/// Adaptive double-exponential integral; tolerates integrable endpoint singularities.
template <class F>
QuadResult integrate_adaptive(F&& f, double a, double b, double rel_tol = 1e-10) {
  thread_local boost::math::quadrature::tanh_sinh<double> rule(15);
  double err = 0.0, l1 = 0.0;
  double v = rule.integrate([&](double x) { return f(x); }, a, b, rel_tol, &err, &l1);
  if (!std::isfinite(v)) throw QuadratureNotConverged("non-finite integral");
  if (err > std::max(1e3 * rel_tol, 1e-8) * std::max(l1, 1e-300))
    throw QuadratureNotConverged("adaptive integral error estimate " + std::to_string(err));
  return {v, err};
}

// ---------------------------------------------------------------------------
// Roots
// ---------------------------------------------------------------------------

struct RootResult {
  double value = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Bisection on a sign change of f over [a, b] until the bracket is below tol.
template <class F>
RootResult bisect(F&& f, double a, double b, double tol, int max_iter = 200) {
  double fa = f(a), fb = f(b);
  if (fa == 0.0) return {a, 0.0, 0, true};
  if (fb == 0.0) return {b, 0.0, 0, true};
  if ((fa > 0.0) == (fb > 0.0)) throw BracketNotFound("no sign change on the bracket");
  RootResult r;
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    double m = 0.5 * (a + b);
    double fm = f(m);
    if (fm == 0.0) return {m, 0.0, r.iterations, true};
    if ((fm > 0.0) == (fa > 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
      fb = fm;
    }
    if (std::fabs(b - a) <= tol) {
      r.value = 0.5 * (a + b);
      r.residual = std::min(std::fabs(fa), std::fabs(fb));
      r.converged = true;
      return r;
    }
  }
  throw NoConvergence("bisection exceeded its iteration budget");
}

struct RootResultN {
  Eigen::VectorXd value;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

using VectorMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 50;
  int max_backtracks = 30;
  /// Analytic Jacobian; forward differences when empty.
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  /// Applied to every trial iterate (e.g. clipping to an admissible set).
  std::function<void(Eigen::VectorXd&)> project;
};

/// Forward-difference Jacobian with step sqrt(eps)(1+|x_j|).
inline Eigen::MatrixXd fd_jacobian(const VectorMap& F, const Eigen::VectorXd& x, const Eigen::VectorXd& fx) {
  const double root_eps = std::sqrt(kMachEps);
  Eigen::MatrixXd J(fx.size(), x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double h = root_eps * (1.0 + std::fabs(x[j]));
    xp[j] = x[j] + h;
    h = xp[j] - x[j];
    J.col(j) = (F(xp) - fx) / h;
    xp[j] = x[j];
  }
  return J;
}

inline Eigen::VectorXd solve_linear(const Eigen::MatrixXd& J, const Eigen::VectorXd& rhs) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
  if (J.rows() == J.cols() && lu.isInvertible()) {
    Eigen::VectorXd x = lu.solve(rhs);
    if (x.allFinite()) return x;
  }
  const double scale = J.squaredNorm();
  if (!(scale > 0.0) || !std::isfinite(scale)) throw SingularJacobian("Jacobian vanishes or is not finite");
  Eigen::MatrixXd JtJ = J.transpose() * J;
  for (double lam : {1e-12, 1e-8, 1e-4}) {
    Eigen::MatrixXd A = JtJ + lam * scale * Eigen::MatrixXd::Identity(J.cols(), J.cols());
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success) continue;
    Eigen::VectorXd x = ldlt.solve(J.transpose() * rhs);
    if (x.allFinite()) return x;
  }
  throw SingularJacobian("linear solve failed after regularization");
}

/// Damped Newton iteration with backtracking on ||F||_2.
inline RootResultN newton_solve(const VectorMap& F, Eigen::VectorXd x, const NewtonOptions& opt) {
  Eigen::VectorXd fx = F(x);
  if (!fx.allFinite()) throw DomainError("F is not finite at the starting point");
  RootResultN res;
  for (int it = 0;; ++it) {
    res.residual = fx.lpNorm<Eigen::Infinity>();
    if (res.residual <= opt.tol) {
      res.value = x;
      res.iterations = it;
      res.converged = true;
      return res;
    }
    if (it >= opt.max_iter)
      throw NoConvergence("Newton stalled with residual " + std::to_string(res.residual));
    Eigen::MatrixXd J = opt.jacobian ? opt.jacobian(x) : fd_jacobian(F, x, fx);
    Eigen::VectorXd dx = solve_linear(J, -fx);
    const double f0 = fx.norm();
    double t = 1.0;
    Eigen::VectorXd xt, ft;
    for (int bt = 0; bt <= opt.max_backtracks; ++bt, t *= 0.5) {
      xt = x + t * dx;
      if (opt.project) opt.project(xt);
      ft = F(xt);
      if (ft.allFinite() && ft.norm() <= (1.0 - 1e-4 * t) * f0) break;
    }
    if (!ft.allFinite()) throw NoConvergence("Newton line search produced non-finite residuals");
    x = xt;
    fx = ft;
  }
}

inline RootResultN newton_solve(const VectorMap& F, const Eigen::VectorXd& x0, double tol, int max_iter) {
  NewtonOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return newton_solve(F, x0, opt);
}

// ---------------------------------------------------------------------------
// Special functions and extrapolation
// ---------------------------------------------------------------------------

/// Lower real branch of Lambert W: the solution y <= -1 of y e^y = x.
inline double lambert_wm1(double x) {
  const double branch = -std::exp(-1.0);
  if (!(x >= branch - 4.0 * kMachEps) || !(x < 0.0))
    throw DomainError("lambert_wm1 requires -1/e <= x < 0");
  if (x <= branch) return -1.0;
  double y = boost::math::lambert_wm1(x);
  // One Halley polish step in case the library result is off by an ulp or two.
  double ey = std::exp(y);
  double fy = y * ey - x;
  double d = ey * (y + 1.0);
  if (d != 0.0) {
    double yn = y - fy / (d - (y + 2.0) * fy / (2.0 * y + 2.0));
    if (std::isfinite(yn) && std::fabs(yn * std::exp(yn) - x) < std::fabs(fy)) y = yn;
  }
  return std::min(y, -1.0);
}

struct ExtrapolationFit {
  double limit = 0.0;
  double coefficient = 0.0;
  double residual = 0.0;  ///< RMS misfit of the model value(h) = L + c h^order
};

/// Fits value(h) = L + c h^order. Two samples give the elimination formula,
/// more samples a least-squares fit.
inline ExtrapolationFit fit_extrapolation(std::span<const std::pair<double, double>> samples, double order) {
  if (samples.size() < 2) throw InsufficientData("extrapolation needs at least two samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i].first > 0.0)) throw DomainError("extrapolation abscissae must be positive");
    for (std::size_t j = 0; j < i; ++j)
      if (samples[i].first == samples[j].first) throw DomainError("extrapolation abscissae must be distinct");
  }
  ExtrapolationFit fit;
  if (samples.size() == 2) {
    double g1 = std::pow(samples[0].first, order), g2 = std::pow(samples[1].first, order);
    double v1 = samples[0].second, v2 = samples[1].second;
    fit.limit = (g1 * v2 - g2 * v1) / (g1 - g2);
    fit.coefficient = (v1 - v2) / (g1 - g2);
    return fit;
  }
  Eigen::MatrixXd A(samples.size(), 2);
  Eigen::VectorXd b(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    A(static_cast<Eigen::Index>(i), 0) = 1.0;
    A(static_cast<Eigen::Index>(i), 1) = std::pow(samples[i].first, order);
    b[static_cast<Eigen::Index>(i)] = samples[i].second;
  }
  Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
  fit.limit = c[0];
  fit.coefficient = c[1];
  fit.residual = std::sqrt((A * c - b).squaredNorm() / double(samples.size()));
  return fit;
}

inline double richardson_extrapolate(std::span<const std::pair<double, double>> samples, double order) {
  return fit_extrapolation(samples, order).limit;
}

/// Least-squares solution of the overdetermined system A c = b.
inline Eigen::VectorXd least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  return A.colPivHouseholderQr().solve(b);
}

/// Surface area of the unit sphere S^{n-1} in R^n.
inline double sphere_area(int n) {
  return 2.0 * std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n);
}

}  // namespace lane_emden
