#include "ndyn/karamata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ndyn/quadrature.hpp"

namespace ndyn {

namespace {

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

double tower(int depth) {
  double t = 1.0;
  for (int i = 0; i < depth; ++i) t = std::exp(t);
  return t;
}

int node_depth(const SvNode& n) {
  switch (n.tag) {
    case SvNode::Tag::Const:
      return 0;
    case SvNode::Tag::LogPow:
      return n.j;
    case SvNode::Tag::ExpPow: {
      int d = 0;
      for (const auto& t : n.terms) d = std::max(d, t.j);
      return d;
    }
    case SvNode::Tag::Product: {
      int d = 0;
      for (const auto& f : n.factors) d = std::max(d, node_depth(f));
      return d;
    }
  }
  return 0;
}

void validate_node(const SvNode& n) {
  switch (n.tag) {
    case SvNode::Tag::Const:
      if (!(n.c > 0.0) || !std::isfinite(n.c))
        fail(ErrCode::Config, "const factor must be a positive finite number");
      return;
    case SvNode::Tag::LogPow:
      if (n.j < 1) fail(ErrCode::Config, "log depth must be >= 1");
      if (n.p == 0.0 || !std::isfinite(n.p))
        fail(ErrCode::Config, "log power must be finite and nonzero");
      return;
    case SvNode::Tag::ExpPow:
      if (n.terms.empty())
        fail(ErrCode::Config, "exp factor needs at least one term");
      for (const auto& t : n.terms) {
        if (t.j < 1) fail(ErrCode::Config, "exp term depth must be >= 1");
        if (!(t.alpha > 0.0) || !(t.alpha < 1.0))
          fail(ErrCode::Config, "exp term exponent must lie in (0,1)");
        if (t.c == 0.0 || !std::isfinite(t.c))
          fail(ErrCode::Config, "exp term coefficient must be finite, nonzero");
      }
      return;
    case SvNode::Tag::Product:
      if (n.factors.empty())
        fail(ErrCode::Config, "product needs at least one factor");
      for (const auto& f : n.factors) validate_node(f);
      return;
  }
  fail(ErrCode::Config, "unknown node tag");
}

// Evaluation over double or D2 through the iterated-log chain.
template <typename T>
T eval_node(const SvNode& n, const std::vector<T>& chain) {
  using std::exp;
  using std::pow;
  switch (n.tag) {
    case SvNode::Tag::Const:
      return T(n.c);
    case SvNode::Tag::LogPow:
      return pow(chain[size_t(n.j)], n.p);
    case SvNode::Tag::ExpPow: {
      T s = chain[0] * 0.0;  // zero of the right type
      for (const auto& t : n.terms) s = s + T(t.c) * pow(chain[size_t(t.j)], t.alpha);
      return exp(s);
    }
    case SvNode::Tag::Product: {
      T prod = T(1.0);
      for (const auto& f : n.factors) prod = prod * eval_node(f, chain);
      return prod;
    }
  }
  fail(ErrCode::Internal, "unknown node tag in eval");
}

}  // namespace

SvNode SvNode::konst(double c) {
  SvNode n;
  n.tag = Tag::Const;
  n.c = c;
  return n;
}
SvNode SvNode::logpow(int j, double p) {
  SvNode n;
  n.tag = Tag::LogPow;
  n.j = j;
  n.p = p;
  return n;
}
SvNode SvNode::exppow(std::vector<ExpTerm> terms) {
  SvNode n;
  n.tag = Tag::ExpPow;
  n.terms = std::move(terms);
  return n;
}
SvNode SvNode::product(std::vector<SvNode> factors) {
  SvNode n;
  n.tag = Tag::Product;
  n.factors = std::move(factors);
  return n;
}

void validate(const SvExpr& e) { validate_node(e.node); }

double domain_cutoff(const SvExpr& e) { return tower(node_depth(e.node)); }

double sv_eval(const SvExpr& e, double x) {
  double M = domain_cutoff(e);
  double t;
  if (e.variant == SvVariant::AtInfinity) {
    if (!(x >= M * (1.0 - 1e-12)))
      fail(ErrCode::Domain, "argument " + fmt_num(x) +
                                " below at-infinity domain cutoff " + fmt_num(M));
    t = x;
  } else {
    if (!(x > 0.0) || !(x <= (1.0 / M) * (1.0 + 1e-12)))
      fail(ErrCode::Domain, "argument " + fmt_num(x) +
                                " outside at-zero domain (0, " +
                                fmt_num(1.0 / M) + "]");
    t = 1.0 / x;
  }
  int depth = node_depth(e.node);
  std::vector<double> chain(size_t(depth) + 1);
  chain[0] = t;
  for (int k = 1; k <= depth; ++k) chain[size_t(k)] = std::log(chain[size_t(k - 1)]);
  return eval_node<double>(e.node, chain);
}

D2 sv_eval(const SvExpr& e, D2 x) {
  D2 t = (e.variant == SvVariant::AtInfinity) ? x : 1.0 / x;
  int depth = node_depth(e.node);
  std::vector<D2> chain(size_t(depth) + 1);
  chain[0] = t;
  for (int k = 1; k <= depth; ++k) chain[size_t(k)] = log(chain[size_t(k - 1)]);
  return eval_node<D2>(e.node, chain);
}

double rv_eval(const RvExpr& g, double x) {
  return std::pow(x, g.gamma) * sv_eval(g.sv, x);
}

// --- normal form ------------------------------------------------------------

namespace {

void hform_accumulate(const SvNode& n, HForm& h) {
  switch (n.tag) {
    case SvNode::Tag::Const:
      h.const_log += std::log(n.c);
      return;
    case SvNode::Tag::LogPow:
      h.terms.push_back({n.j, 1.0, n.p});
      return;
    case SvNode::Tag::ExpPow:
      for (const auto& t : n.terms) h.terms.push_back({t.j - 1, t.alpha, t.c});
      return;
    case SvNode::Tag::Product:
      for (const auto& f : n.factors) hform_accumulate(f, h);
      return;
  }
}

bool dominates(const HTerm& a, const HTerm& b) {
  if (a.d != b.d) return a.d < b.d;
  return a.e > b.e;
}

void canonicalize_h(HForm& h) {
  std::sort(h.terms.begin(), h.terms.end(), [](const HTerm& a, const HTerm& b) {
    if (a.d != b.d) return a.d < b.d;
    if (a.e != b.e) return a.e > b.e;
    return a.c < b.c;
  });
  std::vector<HTerm> merged;
  for (const auto& t : h.terms) {
    if (!merged.empty() && merged.back().d == t.d && merged.back().e == t.e)
      merged.back().c += t.c;
    else
      merged.push_back(t);
  }
  merged.erase(std::remove_if(merged.begin(), merged.end(),
                              [](const HTerm& t) { return t.c == 0.0; }),
               merged.end());
  h.terms = std::move(merged);
}

}  // namespace

HForm to_hform(const SvExpr& e) {
  HForm h;
  hform_accumulate(e.node, h);
  canonicalize_h(h);
  return h;
}

SvExpr from_hform(const HForm& h, SvVariant variant) {
  std::vector<SvNode> factors;
  if (h.const_log != 0.0) factors.push_back(SvNode::konst(std::exp(h.const_log)));
  std::vector<SvNode::ExpTerm> eterms;
  for (const auto& t : h.terms) {
    if (t.d >= 1 && t.e == 1.0) {
      factors.push_back(SvNode::logpow(t.d, t.c));
    } else if (t.e > 0.0 && t.e < 1.0) {
      eterms.push_back({t.d + 1, t.e, t.c});
    } else {
      fail(ErrCode::Internal,
           "exponent term outside the representable grammar (d=" +
               std::to_string(t.d) + ", e=" + fmt_num(t.e) + ")");
    }
  }
  if (!eterms.empty()) factors.push_back(SvNode::exppow(std::move(eterms)));
  SvExpr out;
  out.variant = variant;
  if (factors.empty())
    out.node = SvNode::konst(1.0);
  else if (factors.size() == 1)
    out.node = factors[0];
  else
    out.node = SvNode::product(std::move(factors));
  return out;
}

SvExpr canonicalize(const SvExpr& e) { return from_hform(to_hform(e), e.variant); }

bool sv_equal(const SvExpr& a, const SvExpr& b) {
  if (a.variant != b.variant) return false;
  HForm ha = to_hform(a), hb = to_hform(b);
  auto close = [](double x, double y) {
    return std::fabs(x - y) <= 1e-12 * std::max({1.0, std::fabs(x), std::fabs(y)});
  };
  if (!close(ha.const_log, hb.const_log)) return false;
  if (ha.terms.size() != hb.terms.size()) return false;
  for (size_t i = 0; i < ha.terms.size(); ++i) {
    if (ha.terms[i].d != hb.terms[i].d) return false;
    if (ha.terms[i].e != hb.terms[i].e) return false;
    if (!close(ha.terms[i].c, hb.terms[i].c)) return false;
  }
  return true;
}

// --- operations --------------------------------------------------------------

SvExpr pow_expr(const SvExpr& e, double s) {
  if (s == 0.0 || !std::isfinite(s))
    fail(ErrCode::Config, "power must be finite and nonzero");
  HForm h = to_hform(e);
  h.const_log *= s;
  for (auto& t : h.terms) t.c *= s;
  return from_hform(h, e.variant);
}

SvExpr product_expr(const SvExpr& a, const SvExpr& b) {
  if (a.variant != b.variant)
    fail(ErrCode::Config, "product of expressions with different variants");
  HForm ha = to_hform(a), hb = to_hform(b);
  ha.const_log += hb.const_log;
  ha.terms.insert(ha.terms.end(), hb.terms.begin(), hb.terms.end());
  canonicalize_h(ha);
  return from_hform(ha, a.variant);
}

SvExpr compose_power(const SvExpr& e, double s) {
  if (!(s > 0.0)) fail(ErrCode::Config, "composition power must be positive");
  HForm h = to_hform(e);
  for (auto& t : h.terms) {
    if (t.d == 0)
      t.c *= std::pow(s, t.e);
    else if (t.d == 1 && t.e == 1.0)
      h.const_log += t.c * std::log(s);  // log(s u) = log u + log s, exact
  }
  canonicalize_h(h);
  return from_hform(h, e.variant);
}

SvExpr de_bruijn_conjugate(const SvExpr& e) {
  HForm h = to_hform(e);
  double alpha0 = -1.0;
  for (const auto& t : h.terms)
    if (t.d == 0) alpha0 = std::max(alpha0, t.e);

  if (alpha0 >= 2.0 / 3.0)
    fail(ErrCode::UnsupportedConjugate,
         "leading exponent " + fmt_num(alpha0) +
             " is >= 2/3; conjugate correction bands beyond the first are not "
             "constructed");

  HForm out;
  out.const_log = -h.const_log;
  for (const auto& t : h.terms) out.terms.push_back({t.d, t.e, -t.c});

  if (alpha0 >= 0.5) {
    // Multiply by exp(h h'), the second-order term of inverting v = u + h(u);
    // keep only the pair products that do not vanish at infinity. Only
    // depth-zero pairs can contribute.
    std::vector<HTerm> zero;
    for (const auto& t : h.terms)
      if (t.d == 0) zero.push_back(t);
    for (size_t i = 0; i < zero.size(); ++i) {
      for (size_t j = i; j < zero.size(); ++j) {
        double expo = zero[i].e + zero[j].e - 1.0;
        double coef = (i == j) ? zero[i].c * zero[i].c * zero[i].e
                               : zero[i].c * zero[j].c * (zero[i].e + zero[j].e);
        if (expo > 0.0)
          out.terms.push_back({0, expo, coef});
        else if (expo == 0.0)
          out.const_log += coef;
      }
    }
  }
  canonicalize_h(out);
  return from_hform(out, e.variant);
}

double conjugate_residual(const SvExpr& L, const SvExpr& Lsharp, double x) {
  if (L.variant != SvVariant::AtInfinity || Lsharp.variant != SvVariant::AtInfinity)
    fail(ErrCode::Domain, "conjugate residual is defined for the at-infinity variant");
  double lx = sv_eval(L, x);
  return std::fabs(lx * sv_eval(Lsharp, x * lx) - 1.0);
}

RvExpr asymptotic_inverse(const RvExpr& g) {
  if (!(g.gamma > 0.0))
    fail(ErrCode::Config, "asymptotic inverse needs a positive exponent");
  double inv = 1.0 / g.gamma;
  SvExpr scaled = pow_expr(g.sv, inv);
  SvExpr conj = de_bruijn_conjugate(scaled);
  RvExpr f;
  f.gamma = inv;
  f.sv = compose_power(conj, inv);
  f.sv.variant = g.sv.variant;
  return f;
}

SeriesVerdict series_converges(double a, const SvExpr& L) {
  if (a > 1.0) return SeriesVerdict::Converges;
  if (a < 1.0) return SeriesVerdict::Diverges;
  HForm h = to_hform(L);
  std::vector<HTerm> terms = h.terms;
  for (;;) {
    if (terms.empty()) return SeriesVerdict::Diverges;  // all-critical boundary
    size_t dom = 0;
    for (size_t i = 1; i < terms.size(); ++i)
      if (dominates(terms[i], terms[dom])) dom = i;
    HTerm t = terms[dom];
    if (t.d == 0)
      return t.c > 0.0 ? SeriesVerdict::Diverges : SeriesVerdict::Converges;
    if (t.d == 1 && t.e == 1.0) {
      if (t.c > -1.0) return SeriesVerdict::Diverges;
      if (t.c < -1.0) return SeriesVerdict::Converges;
      // critical factor: integrate it away and shift every depth down
      terms.erase(terms.begin() + long(dom));
      for (auto& r : terms) r.d -= 1;
      continue;
    }
    if (t.c > 0.0) return SeriesVerdict::Diverges;
    return (t.d == 1 && t.e > 1.0) ? SeriesVerdict::Converges
                                   : SeriesVerdict::Diverges;
  }
}

double karamata_integral_check(double alpha, const SvExpr& L, double x) {
  if (alpha == -1.0)
    fail(ErrCode::Domain, "exponent -1 has a logarithmic primitive, not covered");
  SvExpr Li = L;
  Li.variant = SvVariant::AtInfinity;
  double M = domain_cutoff(Li);
  if (!(x > M * std::exp(1.0)))
    fail(ErrCode::Domain, "checkpoint too close to the domain cutoff");
  auto f_of_u = [&](double u) {
    return std::exp((alpha + 1.0) * u) * sv_eval(Li, std::exp(u));
  };
  double integral, asymptote;
  if (alpha > -1.0) {
    asymptote = std::pow(x, alpha + 1.0) * sv_eval(Li, x) / (alpha + 1.0);
    integral = integrate(f_of_u, std::log(M), std::log(x),
                         1e-9 * std::fabs(asymptote));
  } else {
    asymptote = std::pow(x, alpha + 1.0) * sv_eval(Li, x) / (-(alpha + 1.0));
    double upper = std::log(x) + 50.0 / (-(alpha + 1.0));
    integral = integrate(f_of_u, std::log(x), upper, 1e-9 * std::fabs(asymptote));
  }
  return integral / asymptote;
}

TailSum symbolic_tail_sum(const SvExpr& E) {
  SvExpr Ei = E;
  Ei.variant = SvVariant::AtInfinity;
  HForm h = to_hform(Ei);
  std::vector<HTerm> terms = h.terms;
  double const_log = h.const_log;
  int shifts = 0;
  TailSum out;
  for (;;) {
    if (terms.empty()) return out;  // divergent tail, no closed form
    size_t dom = 0;
    for (size_t i = 1; i < terms.size(); ++i)
      if (dominates(terms[i], terms[dom])) dom = i;
    HTerm t = terms[dom];
    if (t.d == 0) {
      if (t.c >= 0.0) return out;  // divergent
      // Watson tail: integral ~ exp(h(s)) s^{1-alpha} / (-c alpha)
      HForm res;
      res.const_log = const_log - std::log(-t.c * t.e);
      res.terms = terms;
      res.terms.push_back({1, 1.0, 1.0 - t.e});
      for (auto& r : res.terms) r.d += shifts;
      canonicalize_h(res);
      out.closed_form = true;
      out.expr = from_hform(res, SvVariant::AtInfinity);
      out.pretty = sv_to_string(out.expr);
      return out;
    }
    if (t.d == 1 && t.e == 1.0) {
      if (t.c == -1.0) {
        terms.erase(terms.begin() + long(dom));
        for (auto& r : terms) r.d -= 1;
        ++shifts;
        continue;
      }
      if (t.c > -1.0) return out;  // divergent
      // plain power tail: integral ~ s^{c+1} (rest) / (-c-1)
      HForm res;
      res.const_log = const_log - std::log(-t.c - 1.0);
      res.terms = terms;
      res.terms[dom].c = t.c + 1.0;
      for (auto& r : res.terms) r.d += shifts;
      canonicalize_h(res);
      out.closed_form = true;
      out.expr = from_hform(res, SvVariant::AtInfinity);
      out.pretty = sv_to_string(out.expr);
      return out;
    }
    return out;  // deeper dominant factors: no closed form constructed
  }
}

// --- serialization -----------------------------------------------------------

namespace {

nlohmann::json node_to_json(const SvNode& n) {
  nlohmann::json j;
  switch (n.tag) {
    case SvNode::Tag::Const:
      j["tag"] = "const";
      j["c"] = n.c;
      return j;
    case SvNode::Tag::LogPow:
      j["tag"] = "logpow";
      j["j"] = n.j;
      j["p"] = n.p;
      return j;
    case SvNode::Tag::ExpPow: {
      j["tag"] = "exppow";
      auto arr = nlohmann::json::array();
      for (const auto& t : n.terms)
        arr.push_back({{"j", t.j}, {"alpha", t.alpha}, {"c", t.c}});
      j["terms"] = arr;
      return j;
    }
    case SvNode::Tag::Product: {
      j["tag"] = "product";
      auto arr = nlohmann::json::array();
      for (const auto& f : n.factors) arr.push_back(node_to_json(f));
      j["factors"] = arr;
      return j;
    }
  }
  fail(ErrCode::Internal, "unknown node tag in serialization");
}

SvNode node_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("tag"))
    fail(ErrCode::Config, "expression node must be an object with a tag");
  std::string tag = j.at("tag").get<std::string>();
  if (tag == "const") return SvNode::konst(j.at("c").get<double>());
  if (tag == "logpow")
    return SvNode::logpow(j.at("j").get<int>(), j.at("p").get<double>());
  if (tag == "exppow") {
    std::vector<SvNode::ExpTerm> terms;
    for (const auto& t : j.at("terms"))
      terms.push_back({t.at("j").get<int>(), t.at("alpha").get<double>(),
                       t.at("c").get<double>()});
    return SvNode::exppow(std::move(terms));
  }
  if (tag == "product") {
    std::vector<SvNode> factors;
    for (const auto& f : j.at("factors")) factors.push_back(node_from_json(f));
    return SvNode::product(std::move(factors));
  }
  fail(ErrCode::Config, "unknown expression tag: " + tag);
}

void node_to_string(const SvNode& n, const std::string& arg, std::ostream& os) {
  switch (n.tag) {
    case SvNode::Tag::Const:
      os << fmt_num(n.c);
      return;
    case SvNode::Tag::LogPow:
      os << "(log_" << n.j << "(" << arg << "))^" << fmt_num(n.p);
      return;
    case SvNode::Tag::ExpPow: {
      os << "exp(";
      for (size_t i = 0; i < n.terms.size(); ++i) {
        const auto& t = n.terms[i];
        if (i && t.c >= 0) os << " + ";
        if (i && t.c < 0) os << " - ";
        double c = (i ? std::fabs(t.c) : t.c);
        if (c != 1.0 || !i) os << fmt_num(c) << "*";
        os << "(log_" << t.j << "(" << arg << "))^" << fmt_num(t.alpha);
      }
      os << ")";
      return;
    }
    case SvNode::Tag::Product:
      for (size_t i = 0; i < n.factors.size(); ++i) {
        if (i) os << " * ";
        node_to_string(n.factors[i], arg, os);
      }
      return;
  }
}

}  // namespace

nlohmann::json sv_to_json(const SvExpr& e) {
  nlohmann::json j;
  j["variant"] = (e.variant == SvVariant::AtInfinity) ? "infinity" : "zero";
  j["node"] = node_to_json(e.node);
  return j;
}

SvExpr sv_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("variant") || !j.contains("node"))
    fail(ErrCode::Config, "expression needs 'variant' and 'node' fields");
  std::string v = j.at("variant").get<std::string>();
  SvExpr e;
  if (v == "infinity")
    e.variant = SvVariant::AtInfinity;
  else if (v == "zero")
    e.variant = SvVariant::AtZero;
  else
    fail(ErrCode::Config, "variant must be 'infinity' or 'zero'");
  e.node = node_from_json(j.at("node"));
  validate(e);
  return e;
}

std::string sv_to_string(const SvExpr& e) {
  std::ostringstream os;
  node_to_string(e.node, e.variant == SvVariant::AtInfinity ? "x" : "1/z", os);
  return os.str();
}

}  // namespace ndyn
