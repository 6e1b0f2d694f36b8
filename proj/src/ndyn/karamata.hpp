#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "ndyn/dual.hpp"
#include "ndyn/errors.hpp"

namespace ndyn {

// Slowly varying expressions built from a closed grammar: positive constants,
// powers of iterated logarithms, and exponentials of fractional powers of
// iterated logarithms, combined by products. The same tree serves both for
// functions of a large argument (AtInfinity, L(x) as x -> inf) and for
// functions of a small one (AtZero, L(z) as z -> 0+, the tree applied to 1/z).

enum class SvVariant { AtInfinity, AtZero };

struct SvNode {
  enum class Tag { Const, LogPow, ExpPow, Product };

  struct ExpTerm {
    int j = 1;           // iterated-log depth, >= 1
    double alpha = 0.5;  // exponent in (0,1)
    double c = 1.0;      // coefficient, != 0
  };

  Tag tag = Tag::Const;
  double c = 1.0;                // Const: value > 0
  int j = 1;                     // LogPow depth >= 1
  double p = 1.0;                // LogPow exponent != 0
  std::vector<ExpTerm> terms;    // ExpPow
  std::vector<SvNode> factors;   // Product

  static SvNode konst(double c);
  static SvNode logpow(int j, double p);
  static SvNode exppow(std::vector<ExpTerm> terms);
  static SvNode product(std::vector<SvNode> factors);
};

struct SvExpr {
  SvVariant variant = SvVariant::AtInfinity;
  SvNode node;
};

// x^gamma * L(x); the regularly varying wrapper.
struct RvExpr {
  double gamma = 1.0;
  SvExpr sv;
};

// Exponent-side normal form: log L(x) = const_log + sum of c*(log^{(d)} u)^e
// with u = log x, where depth d = 0 means u itself. All symbolic work
// (conjugation, convergence cascade, tail sums) happens here.
struct HTerm {
  int d = 0;
  double e = 1.0;
  double c = 0.0;
};

struct HForm {
  double const_log = 0.0;
  std::vector<HTerm> terms;  // canonical: merged, sorted by dominance
};

enum class SeriesVerdict { Converges, Diverges };

// --- construction / validation -------------------------------------------

void validate(const SvExpr& e);  // throws Config on malformed trees

// Smallest admissible at-infinity argument: every iterated log that the
// expression touches is >= 1 there. AtZero expressions admit z in (0, 1/M].
double domain_cutoff(const SvExpr& e);

// --- evaluation -----------------------------------------------------------

double sv_eval(const SvExpr& e, double x);
D2 sv_eval(const SvExpr& e, D2 x);
double rv_eval(const RvExpr& g, double x);

// --- normal form ----------------------------------------------------------

HForm to_hform(const SvExpr& e);
SvExpr from_hform(const HForm& h, SvVariant variant);
SvExpr canonicalize(const SvExpr& e);
bool sv_equal(const SvExpr& a, const SvExpr& b);  // canonical-tree equality

// --- operations -----------------------------------------------------------

// L^s, exact on the grammar.
SvExpr pow_expr(const SvExpr& e, double s);

// Pointwise product of two expressions with the same variant.
SvExpr product_expr(const SvExpr& a, const SvExpr& b);

// L(x^s) for s > 0, asymptotic: exact for powers of log x and for
// exponential-of-power factors; deeper iterated-log factors are invariant up
// to a ratio tending to one and are kept unchanged.
SvExpr compose_power(const SvExpr& e, double s);

// de Bruijn conjugate L# with L(x) L#(x L(x)) -> 1. Reciprocal rule while the
// leading u^alpha exponent stays below 1/2; the first correction band
// [1/2, 2/3) multiplies in the kept part of exp(h h'); above that the
// construction is refused (UnsupportedConjugate).
SvExpr de_bruijn_conjugate(const SvExpr& e);

// |L(x) L#(x L(x)) - 1| evaluated at an at-infinity argument x.
double conjugate_residual(const SvExpr& L, const SvExpr& Lsharp, double x);

// Inverse of g(x) = x^gamma L(x) in the asymptotic sense: returns f with
// g(f(x))/x -> 1, namely f(x) = x^(1/gamma) * (L^(1/gamma))#(x^(1/gamma)).
RvExpr asymptotic_inverse(const RvExpr& g);

// Convergence of sum n^{-a} L(n). a != 1 is decided by the power alone; a = 1
// walks the dominance-ordered exponent terms (Bertrand cascade), where the
// all-critical boundary diverges.
SeriesVerdict series_converges(double a, const SvExpr& L);

// Quadrature check of the Karamata asymptote for integrals of t^alpha L(t):
// returns integral / asymptote (-> 1). alpha > -1 integrates from the domain
// cutoff up to x against x^{alpha+1} L(x)/(alpha+1); alpha < -1 integrates the
// tail from x against x^{alpha+1} L(x)/|alpha+1|. alpha = -1 is out of scope.
double karamata_integral_check(double alpha, const SvExpr& L, double x);

// Symbolic tail sum: an at-infinity expression E(l) with sum_{l>=n} l^{-1}E(l)
// asymptotic to the returned expression evaluated at n. Handles the critical
// Bertrand chain followed by a single power or Watson-type exponential factor;
// anything else comes back with closed_form=false and the caller falls back to
// numeric summation.
struct TailSum {
  bool closed_form = false;
  SvExpr expr;         // valid when closed_form
  std::string pretty;  // printable form, empty when numeric fallback is needed
};
TailSum symbolic_tail_sum(const SvExpr& E);

// --- serialization --------------------------------------------------------

nlohmann::json sv_to_json(const SvExpr& e);
SvExpr sv_from_json(const nlohmann::json& j);
std::string sv_to_string(const SvExpr& e);

}  // namespace ndyn
