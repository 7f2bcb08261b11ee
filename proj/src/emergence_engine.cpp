#include "emergence/emergence_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <thread>

namespace emergence {

namespace {

std::string message_of(const Error& e) {
  const std::string what = e.what();
  const std::string prefix = std::string(error_code_name(e.code())) + ": ";
  return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
}

std::optional<ErrorCode> error_code_from_name(const std::string& name) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::kSchemaError); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (error_code_name(code) == name) return code;
  }
  return std::nullopt;
}

Param concat(const std::vector<Param>& parts) {
  long n = 0;
  for (const auto& p : parts) n += p.size();
  Param out(n);
  long at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

void prefix_path(Error& e, const std::string& label) {
  if (label.empty()) return;
  e.path = e.path.empty() ? label : label + "/" + e.path;
}

}  // namespace

// ---------------------------------------------------------- names, json

std::string_view lemma_kind_name(LemmaKind kind) {
  switch (kind) {
    case LemmaKind::kMonomial: return "monomial";
    case LemmaKind::kComposition: return "composition";
    case LemmaKind::kSum: return "sum";
    case LemmaKind::kUnivariate: return "univariate";
    case LemmaKind::kAccumulate: return "accumulate";
    case LemmaKind::kMultivariate: return "multivariate";
    case LemmaKind::kDirect: return "direct";
    case LemmaKind::kShared: return "shared";
  }
  return "?";
}

std::string_view assignment_name(Assignment a) {
  switch (a) {
    case Assignment::kLeaves: return "leaves";
    case Assignment::kPerTerm: return "per_term";
    case Assignment::kShared: return "shared";
  }
  return "?";
}

int ProvenanceNode::depth() const {
  int d = 0;
  for (const auto& c : children) d = std::max(d, c.depth());
  return d + 1;
}

Json ProvenanceNode::to_json() const {
  Json j;
  j["lemma"] = lemma_kind_name(kind);
  if (!label.empty()) j["label"] = label;
  if (!detail.empty()) j["detail"] = detail;
  if (leaf) j["leaf"] = *leaf;
  if (!children.empty()) {
    Json c = Json::array();
    for (const auto& ch : children) c.push_back(ch.to_json());
    j["children"] = c;
  }
  return j;
}

Json Leaf::to_json() const {
  Json j;
  j["label"] = label;
  j["coefficient"] = f.to_json();
  j["algebra"] = algebra->kind();
  j["auxiliary"] = auxiliary;
  if (term) j["term"] = *term;
  return j;
}

Json Certificate::to_json() const {
  Json j;
  j["samples"] = samples;
  j["max_functional_residual"] = max_functional_residual;
  j["max_operator_residual"] = max_operator_residual;
  j["max_raw_operator_residual"] = max_raw_operator_residual;
  j["tol"] = tol;
  j["seed"] = seed;
  j["pass"] = pass;
  if (failure_code) {
    j["failure"] = {{"code", error_code_name(*failure_code)}, {"message", failure}, {"path", failure_path}};
    if (failure_residual) j["failure"]["residual"] = *failure_residual;
  }
  return j;
}

Certificate Certificate::from_json(const Json& j) {
  Certificate c;
  c.samples = j.at("samples").get<std::size_t>();
  c.max_functional_residual = j.at("max_functional_residual").get<double>();
  c.max_operator_residual = j.at("max_operator_residual").get<double>();
  c.max_raw_operator_residual = j.at("max_raw_operator_residual").get<double>();
  c.tol = j.at("tol").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.pass = j.at("pass").get<bool>();
  if (j.contains("failure")) {
    const auto& f = j.at("failure");
    c.failure_code = error_code_from_name(f.at("code").get<std::string>());
    if (!c.failure_code) throw Error(ErrorCode::kSchemaError, "unknown error code in certificate");
    c.failure = f.at("message").get<std::string>();
    c.failure_path = f.at("path").get<std::string>();
    if (f.contains("residual")) c.failure_residual = f.at("residual").get<double>();
  }
  return c;
}

// ---------------------------------------------------------- verification

double quadratic_form_distance(const Operator& a, const Operator& b) {
  return frobenius(sym_part(a).matrix() - sym_part(b).matrix());
}

Certificate verify_operators(const Gpt& t1, const TargetFunction& target, int samples, double tol,
                             std::uint64_t seed, int jobs) {
  Certificate cert;
  cert.tol = tol;
  cert.seed = seed;
  cert.samples = static_cast<std::size_t>(std::max(samples, 0));

  const auto& space = t1.space();
  const bool complex_field = space->scalar_kind() == ScalarKind::kComplex;
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Param> eps(cert.samples);
  std::vector<Vector> phi(cert.samples);
  for (std::size_t i = 0; i < cert.samples; ++i) {
    eps[i] = t1.sample(rng);
    phi[i] = Vector(space->dim());
    for (long k = 0; k < space->dim(); ++k) {
      const double re = normal(rng);
      const double im = complex_field ? normal(rng) : 0.0;
      phi[i](k) = Scalar(re, im);
    }
  }

  struct Outcome {
    double functional = 0.0;
    double op = 0.0;
    double raw = 0.0;
    std::optional<Error> error;
  };
  std::vector<Outcome> out(cert.samples);
  auto work = [&](std::size_t i) {
    try {
      const Operator a = t1.evaluate(eps[i]);
      const Operator b = target(eps[i]);
      require_same_space(a, b, "certificate");
      const Scalar l1 = lagrangian_value(*space, a, phi[i]);
      const Scalar l2 = lagrangian_value(*space, b, phi[i]);
      out[i].functional = std::abs(l1 - l2) / std::max({1.0, std::abs(l1), std::abs(l2)});
      out[i].op = quadratic_form_distance(a, b);
      out[i].raw = frobenius(a.matrix() - b.matrix());
    } catch (const Error& e) {
      out[i].error = e;
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(cert.samples)));
  if (threads == 1) {
    for (std::size_t i = 0; i < cert.samples; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < cert.samples; i += threads) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  bool finite = true;
  for (const auto& o : out) {
    if (o.error) {
      if (!cert.failure_code) {
        cert.failure_code = o.error->code();
        cert.failure = message_of(*o.error);
        cert.failure_path = o.error->path;
        cert.failure_residual = o.error->residual;
      }
      continue;
    }
    finite = finite && std::isfinite(o.functional) && std::isfinite(o.op);
    cert.max_functional_residual = std::max(cert.max_functional_residual, o.functional);
    cert.max_operator_residual = std::max(cert.max_operator_residual, o.op);
    cert.max_raw_operator_residual = std::max(cert.max_raw_operator_residual, o.raw);
  }
  cert.pass = !cert.failure_code && finite && cert.max_functional_residual <= tol && cert.max_operator_residual <= tol;
  return cert;
}

Certificate verify_emergence(const EmergenceMap& map, int samples, double tol, std::uint64_t seed, int jobs) {
  return verify_operators(*map.source(), [&map](const Param& e) { return map.target_operator(e); }, samples, tol, seed,
                          jobs);
}

Certificate verify_emergence(const Gpt& t1, const Ppt& t2, const SharedFunction& f, int samples, double tol,
                             std::uint64_t seed, int jobs) {
  return verify_operators(t1, [&](const Param& e) { return t2.evaluate(f(e)); }, samples, tol, seed, jobs);
}

// ---------------------------------------------------------- map evaluation

namespace {

void eval_node(const ProvenanceNode& n, const std::vector<Leaf>& leaves, const Gpt& src, const Param& eps,
               double orbit_tol, std::vector<Param>& c, std::vector<Param>& delta) {
  try {
    switch (n.kind) {
      case LemmaKind::kMonomial: {
        const Leaf& leaf = leaves.at(*n.leaf);
        const Operator a = compose(src.evaluate(eps), leaf.right_inverse);
        try {
          c[*n.leaf] = solve_action_on_identity(*leaf.algebra, a, orbit_tol);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kNotInIdentityOrbit) throw;
          rethrow_as(e, ErrorCode::kNotScalarForm, "Psi_1 o R is not a parameter multiple of I at " + leaf.label);
        }
        delta[*n.leaf] = coefficient_preimage(leaf.f, *leaf.algebra, c[*n.leaf]);
        return;
      }
      case LemmaKind::kComposition: {
        const Param root = src.algebra()->sqrt_select(eps);
        for (const auto& ch : n.children) eval_node(ch, leaves, src, root, orbit_tol, c, delta);
        return;
      }
      case LemmaKind::kSum: {
        const Param half = src.algebra()->scale(0.5, eps);
        for (const auto& ch : n.children) eval_node(ch, leaves, src, half, orbit_tol, c, delta);
        return;
      }
      default:
        for (const auto& ch : n.children) eval_node(ch, leaves, src, eps, orbit_tol, c, delta);
        return;
    }
  } catch (Error& e) {
    prefix_path(e, n.label);
    throw;
  }
}

std::vector<std::vector<std::size_t>> products_of(const ProvenanceNode& n) {
  switch (n.kind) {
    case LemmaKind::kMonomial: return {{*n.leaf}};
    case LemmaKind::kComposition: {
      std::vector<std::vector<std::size_t>> acc{{}};
      for (const auto& ch : n.children) {
        std::vector<std::vector<std::size_t>> next;
        for (const auto& a : acc) {
          for (const auto& b : products_of(ch)) {
            auto ab = a;
            ab.insert(ab.end(), b.begin(), b.end());
            next.push_back(std::move(ab));
          }
        }
        acc = std::move(next);
      }
      return acc;
    }
    default: {
      std::vector<std::vector<std::size_t>> acc;
      for (const auto& ch : n.children) {
        auto p = products_of(ch);
        acc.insert(acc.end(), p.begin(), p.end());
      }
      return acc;
    }
  }
}

}  // namespace

void EmergenceMap::evaluate_leaves(const Param& eps, std::vector<Param>& c, std::vector<Param>& delta) const {
  if (leaves_.empty()) throw Error(ErrorCode::kBadSpec, "map has no lemma tree");
  c.assign(leaves_.size(), Param());
  delta.assign(leaves_.size(), Param());
  eval_node(tree_, leaves_, *source_, eps, options_.orbit_tol, c, delta);
}

std::vector<Param> EmergenceMap::leaf_parameters(const Param& eps) const {
  std::vector<Param> c, delta;
  evaluate_leaves(eps, c, delta);
  return delta;
}

std::vector<Param> EmergenceMap::per_term(const Param& eps) const {
  if (direct_per_term_) return direct_per_term_(eps);
  if (products_.empty() || !ppt_) throw Error(ErrorCode::kBadSpec, "map has no per-term assignment");
  std::vector<Param> c, delta;
  evaluate_leaves(eps, c, delta);
  const auto& alg = *ppt_->algebra();
  std::vector<Param> out(ppt_->terms().size());
  for (const auto& p : products_) {
    Param value = alg.one();
    for (std::size_t l : p.leaves) value = alg.mul(value, c[l]);
    try {
      out[p.term] = coefficient_preimage(ppt_->terms()[p.term].f, alg, value);
    } catch (Error& e) {
      prefix_path(e, "realize/term[" + std::to_string(p.term) + "]");
      throw;
    }
  }
  return out;
}

Param EmergenceMap::shared(const Param& eps) const {
  if (!direct_shared_) throw Error(ErrorCode::kBadSpec, "map has no shared assignment");
  return direct_shared_(eps);
}

Param EmergenceMap::flat(const Param& eps) const {
  switch (assignment_) {
    case Assignment::kLeaves: return concat(leaf_parameters(eps));
    case Assignment::kPerTerm: return concat(per_term(eps));
    case Assignment::kShared: return shared(eps);
  }
  return {};
}

Operator EmergenceMap::target_operator(const Param& eps) const {
  switch (assignment_) {
    case Assignment::kLeaves: return target_gpt_->evaluate(concat(leaf_parameters(eps)));
    case Assignment::kPerTerm: return ppt_->evaluate_per_term(per_term(eps));
    case Assignment::kShared: return ppt_->evaluate(shared(eps));
  }
  throw Error(ErrorCode::kBadSpec, "unknown assignment");
}

Json EmergenceMap::to_json() const {
  Json j;
  j["assignment"] = assignment_name(assignment_);
  j["source"] = source_->describe();
  if (ppt_) j["target"] = ppt_->describe();
  else if (target_gpt_) j["target"] = target_gpt_->describe();
  j["provenance"] = tree_.to_json();
  j["provenance_depth"] = tree_.depth();
  Json ls = Json::array();
  for (const auto& l : leaves_) ls.push_back(l.to_json());
  j["leaves"] = ls;
  j["certificate"] = certificate_.to_json();
  return j;
}

Json EmergenceMap::assignment_json(const Param& eps) const {
  Json j;
  j["eps"] = vector_to_json(eps);
  switch (assignment_) {
    case Assignment::kLeaves: {
      Json a = Json::array();
      for (const auto& p : leaf_parameters(eps)) a.push_back(vector_to_json(p));
      j["leaves"] = a;
      break;
    }
    case Assignment::kPerTerm: {
      Json a = Json::array();
      for (const auto& p : per_term(eps)) a.push_back(vector_to_json(p));
      j["per_term"] = a;
      break;
    }
    case Assignment::kShared: j["shared"] = vector_to_json(shared(eps)); break;
  }
  return j;
}

// ---------------------------------------------------------- synthesis

namespace {

// Partial lemma tree with its own leaf numbering.
struct Synth {
  ProvenanceNode node;
  std::vector<Leaf> leaves;
  GptPtr target;
};

void shift_leaves(ProvenanceNode& n, std::size_t offset) {
  if (n.leaf) *n.leaf += offset;
  for (auto& c : n.children) shift_leaves(c, offset);
}

Synth make_leaf(Leaf leaf) {
  Synth s;
  s.node.kind = LemmaKind::kMonomial;
  s.node.label = leaf.label;
  s.node.leaf = 0;
  s.target = Gpt::coefficient_monomial(leaf.algebra, leaf.f, leaf.op);
  s.leaves.push_back(std::move(leaf));
  return s;
}

Synth combine(LemmaKind kind, std::string label, std::string detail, Synth a, Synth b) {
  Synth s;
  s.node.kind = kind;
  s.node.label = std::move(label);
  s.node.detail = std::move(detail);
  shift_leaves(b.node, a.leaves.size());
  s.node.children = {std::move(a.node), std::move(b.node)};
  s.leaves = std::move(a.leaves);
  for (auto& l : b.leaves) s.leaves.push_back(std::move(l));
  s.target = kind == LemmaKind::kComposition ? compose_gpt(a.target, b.target) : sum_gpt(a.target, b.target);
  return s;
}

Synth wrap(LemmaKind kind, std::string label, std::string detail, Synth inner) {
  ProvenanceNode n;
  n.kind = kind;
  n.label = std::move(label);
  n.detail = std::move(detail);
  n.children.push_back(std::move(inner.node));
  inner.node = std::move(n);
  return inner;
}

std::string compose_detail(const Gpt& t1) { return "sqrt branch " + t1.algebra()->sqrt_branch(); }
const char* kSumDetail = "both summands at eps/2 by scalar invariance";

Synth map_synth(const EmergenceMap& m) {
  if (m.leaves().empty() || !m.target_gpt()) {
    throw Error(ErrorCode::kBadSpec, "map has no lemma tree to combine");
  }
  return Synth{m.provenance(), m.leaves(), m.target_gpt()};
}

bool claimed(const Gpt& t, StructureFlag flag) { return t.verified() && t.claims().includes(flag); }

void require_structure(const Gpt& t, StructureFlag flag, ErrorCode code, std::uint64_t seed) {
  if (claimed(t, flag)) return;
  const auto r = check_structure(t, flag, 32, 1e-10, seed);
  if (r.pass) return;
  const double res = std::max({r.additive_residual, r.multiplicative_residual, r.scalar_residual});
  throw Error(code, "source GPT is not " + std::string(structure_flag_name(flag)) + " (residual " +
                        std::to_string(res) + (r.detail.empty() ? "" : ", " + r.detail) + ")")
      .with_residual(res);
}

void require_certified_against(const GptPtr& t1, const EmergenceMap& m, const char* which) {
  if (m.source() != t1) throw Error(ErrorCode::kBadSpec, std::string(which) + " was built for a different source");
  if (!m.certificate().pass) {
    throw Error(ErrorCode::kHypothesisViolated, std::string(which) + " is not certified")
        .with_residual(m.certificate().max_operator_residual);
  }
}

// Builds univariate and multivariate trees for one level of the recursion.
class Synthesizer {
 public:
  explicit Synthesizer(const Gpt& src) : src_(&src) {}

  Synth synth(const Ppt& q, const std::vector<std::size_t>& origin, const std::string& label) {
    if (q.terms().size() == 1) return single(q, origin, label);
    if (q.variables() == 1) return univariate(q, origin, label);
    return multivariate(q, origin, label);
  }

  Synth univariate(const Ppt& q, const std::vector<std::size_t>& origin, const std::string& label) {
    if (q.terms().empty()) throw Error(ErrorCode::kBadSpec, "polynomial has no terms");
    if (q.terms().size() == 1) return single(q, origin, label);
    std::map<int, std::size_t> by_exp;
    for (std::size_t i = 0; i < q.terms().size(); ++i) by_exp[q.terms()[i].alpha.at(0)] = i;
    const int l = by_exp.rbegin()->first;
    const Operator id = Operator::identity(q.space());
    const Operator& psi = q.slots().front();
    const Operator& r = q.right_inverses().front();

    auto coefficient_leaf = [&](int j) {
      const std::size_t i = by_exp.at(j);
      return make_leaf(Leaf{label + "/Gamma[" + std::to_string(j) + "]", q.terms()[i].f, id, id, q.algebra(),
                            origin.at(i), false});
    };
    auto aux = [&](int j) {
      return make_leaf(Leaf{label + "/kappa[" + std::to_string(j) + "]", CoefficientFunction::linear(1.0), psi, r,
                            q.algebra(), std::nullopt, true});
    };

    Synth gamma = coefficient_leaf(l);
    for (int j = l - 1; j >= 1; --j) {
      Synth step = combine(LemmaKind::kComposition, "", compose_detail(*src_), std::move(gamma), aux(j));
      if (by_exp.count(j)) {
        gamma = combine(LemmaKind::kSum, "", kSumDetail, coefficient_leaf(j), std::move(step));
      } else {
        gamma = std::move(step);
      }
    }
    Synth top = combine(LemmaKind::kComposition, "", compose_detail(*src_), std::move(gamma), aux(0));
    std::string detail = "Horner recursion, Gamma_j = f_j I + Gamma_{j+1} o kappa Psi";
    if (by_exp.count(0)) {
      top = combine(LemmaKind::kSum, "", "constant term f_0 I added by one extra sum step", std::move(top),
                    coefficient_leaf(0));
      detail += "; constant term absorbed by an extra sum";
    }
    return wrap(LemmaKind::kUnivariate, label, detail, std::move(top));
  }

  Synth multivariate(const Ppt& q, const std::vector<std::size_t>& origin, const std::string& label) {
    const auto pieces = ppt_factor_last_variable(q);
    const int r = q.variables();
    auto remap = [&](const FactorPiece& p) {
      std::vector<std::size_t> o;
      for (std::size_t k : p.origin) o.push_back(origin.at(k));
      return o;
    };
    const std::string here = label + "/x" + std::to_string(r);
    if (pieces.size() == 1 && pieces.front().exponent == 0) {
      return wrap(LemmaKind::kMultivariate, here, "last variable absent",
                  synth(pieces.front().q, remap(pieces.front()), label));
    }
    std::vector<Synth> summands;
    for (const auto& p : pieces) {
      const std::string plabel = here + "^" + std::to_string(p.exponent);
      Synth s = synth(p.q, remap(p), plabel);
      if (p.exponent > 0) {
        const Operator& slot = q.slots().back();
        const Operator& rinv = q.right_inverses().back();
        Synth k = make_leaf(Leaf{plabel + "/kappa", CoefficientFunction::linear(1.0), power(slot, p.exponent),
                                 power(rinv, p.exponent), q.algebra(), std::nullopt, true});
        s = combine(LemmaKind::kComposition, "", compose_detail(*src_), std::move(s), std::move(k));
      }
      summands.push_back(std::move(s));
    }
    Synth acc = std::move(summands.front());
    for (std::size_t i = 1; i < summands.size(); ++i) {
      acc = combine(LemmaKind::kSum, "", kSumDetail, std::move(acc), std::move(summands[i]));
    }
    acc = wrap(LemmaKind::kAccumulate, "", "left fold over " + std::to_string(pieces.size()) + " pieces",
               std::move(acc));
    return wrap(LemmaKind::kMultivariate, here, "factored on the last variable", std::move(acc));
  }

  Synth single(const Ppt& q, const std::vector<std::size_t>& origin, const std::string& label) {
    const auto& t = q.terms().front();
    return make_leaf(Leaf{label + "/term", t.f, q.term_monomial(0), q.monomial_right_inverse(t.alpha), q.algebra(),
                          origin.at(0), false});
  }

  const Gpt* src_;
};

}  // namespace

struct EngineAccess {
  static EmergenceMap make(const GptPtr& t1, Synth s, const EngineOptions& options) {
    EmergenceMap m;
    m.assignment_ = Assignment::kLeaves;
    m.source_ = t1;
    m.tree_ = std::move(s.node);
    m.leaves_ = std::move(s.leaves);
    m.target_gpt_ = std::move(s.target);
    m.options_ = options;
    return m;
  }

  static void realize(EmergenceMap& m, const Ppt& ppt) {
    m.ppt_ = ppt;
    m.assignment_ = Assignment::kPerTerm;
    std::vector<int> covered(ppt.terms().size(), 0);
    for (const auto& leaves : products_of(m.tree_)) {
      EmergenceMap::Product p;
      p.leaves = leaves;
      int terms = 0;
      Operator op = Operator::identity(ppt.space());
      for (std::size_t l : leaves) {
        const Leaf& leaf = m.leaves_[l];
        if (leaf.term) {
          p.term = *leaf.term;
          ++terms;
        }
        op = compose(op, leaf.op);
      }
      if (terms != 1) throw Error(ErrorCode::kBadSpec, "realization product carries " + std::to_string(terms) + " terms");
      const Operator& mono = ppt.term_monomial(p.term);
      const double gap = frobenius_distance(op, mono);
      if (gap > 1e-9 * std::max(1.0, frobenius(mono.matrix()))) {
        throw Error(ErrorCode::kBadSpec, "realized operator differs from monomial of term " + std::to_string(p.term))
            .with_residual(gap);
      }
      ++covered[p.term];
      m.products_.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < covered.size(); ++i) {
      if (covered[i] != 1) {
        throw Error(ErrorCode::kBadSpec, "term " + std::to_string(i) + " covered " + std::to_string(covered[i]) + " times");
      }
    }
  }

  static EmergenceMap direct(const GptPtr& t1, const Ppt& ppt, Assignment a, std::string detail,
                             const EngineOptions& options) {
    EmergenceMap m;
    m.assignment_ = a;
    m.source_ = t1;
    m.ppt_ = ppt;
    m.tree_.kind = LemmaKind::kDirect;
    m.tree_.detail = std::move(detail);
    m.options_ = options;
    return m;
  }

  static void set_per_term(EmergenceMap& m, PerTermFunction f) { m.direct_per_term_ = std::move(f); }
  static void set_shared(EmergenceMap& m, SharedFunction f) { m.direct_shared_ = std::move(f); }
  static void set_certificate(EmergenceMap& m, Certificate c) { m.certificate_ = std::move(c); }
  static ProvenanceNode& tree(EmergenceMap& m) { return m.tree_; }

  static void certify(EmergenceMap& m) {
    const auto& o = m.options_;
    m.certificate_ = verify_emergence(m, o.samples, o.tol, o.seed, o.jobs);
    if (!o.require_pass || m.certificate_.pass) return;
    const auto& c = m.certificate_;
    if (c.failure_code) {
      Error e(*c.failure_code, c.failure);
      e.path = c.failure_path;
      e.residual = c.failure_residual;
      throw e;
    }
    throw Error(ErrorCode::kHypothesisViolated,
                "certificate failed: functional " + std::to_string(c.max_functional_residual) + ", operator " +
                    std::to_string(c.max_operator_residual) + " above tolerance")
        .with_residual(std::max(c.max_functional_residual, c.max_operator_residual));
  }
};

namespace {

Ppt with_inverses(const Ppt& t2, const EngineOptions& o) {
  if (t2.right_invertible()) return t2;
  try {
    return t2.with_right_inverses(o.inverse_method, o.inverse_tol);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNotRightInvertible) throw;
    rethrow_as(e, ErrorCode::kHypothesisViolated, "target slots are not right-invertible");
  }
}

void check_preconditions(const GptPtr& t1, const Ppt& t2, const EngineOptions& o) {
  const int l = t1->degree();
  const int l2 = t2.algebra()->degree();
  if (l2 % l != 0) {
    throw Error(ErrorCode::kHypothesisViolated, "target degree " + std::to_string(l2) +
                                                    " is not a multiple of source degree " + std::to_string(l));
  }
  for (std::size_t i = 0; i < t2.terms().size(); ++i) {
    if (!t2.terms()[i].f.nowhere_vanishing()) {
      throw Error(ErrorCode::kHypothesisViolated,
                  "coefficient of term " + std::to_string(i) + " is not declared nowhere vanishing");
    }
  }
  if (t2.terms().size() > 1 && !(t1->verified() && t1->claims().is_homomorphic())) {
    const auto r = check_structure(*t1, StructureFlag::kHomomorphic, 32, 1e-10, o.seed);
    if (!r.pass) {
      const double res = std::max({r.additive_residual, r.multiplicative_residual, r.scalar_residual});
      throw Error(ErrorCode::kHypothesisViolated,
                  "source GPT is not homomorphic on " + std::to_string(r.samples) + " samples (additive " +
                      std::to_string(r.additive_residual) + ", multiplicative " +
                      std::to_string(r.multiplicative_residual) + ", scalar " + std::to_string(r.scalar_residual) +
                      (r.detail.empty() ? "" : ", " + r.detail) + ")")
          .with_residual(res);
    }
  }
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

EmergenceMap synthesize(const GptPtr& t1, const Ppt& t2, const EngineOptions& options, bool univariate_only) {
  if (univariate_only && t2.variables() != 1) {
    throw Error(ErrorCode::kBadSpec, "univariate lemma needs a one-variable polynomial");
  }
  if (t2.terms().empty()) throw Error(ErrorCode::kBadSpec, "polynomial has no terms");
  if (t2.space() != t1->space() && !(*t2.space() == *t1->space())) {
    throw Error(ErrorCode::kSpaceMismatch, "source and target act on different field spaces");
  }
  check_preconditions(t1, t2, options);
  const Ppt ready = with_inverses(t2, options);
  Synthesizer s(*t1);
  Synth tree = s.synth(ready, iota(ready.terms().size()), univariate_only ? "univariate" : "p");
  EmergenceMap m = EngineAccess::make(t1, std::move(tree), options);
  EngineAccess::realize(m, ready);
  EngineAccess::certify(m);
  return m;
}

}  // namespace

// ---------------------------------------------------------- lemma API

EmergenceMap emerge_monomial(const GptPtr& t1, const CoefficientFunction& g, const Operator& psi, int l,
                             const EngineOptions& options, AlgebraPtr algebra) {
  if (l < 0) throw Error(ErrorCode::kBadSpec, "negative exponent");
  if (!algebra) algebra = std::make_shared<ComplexScalars>();
  if (!(*t1->space() == *psi.space())) throw Error(ErrorCode::kSpaceMismatch, "monomial target on another field space");
  if (!g.nowhere_vanishing()) throw Error(ErrorCode::kHypothesisViolated, "coefficient is not nowhere vanishing");
  const Operator op = power(psi, l);
  const Operator r = l == 0 ? Operator::identity(psi.space())
                            : power(right_inverse(psi, options.inverse_method, options.inverse_tol), l);
  Synth s = make_leaf(Leaf{"monomial", g, op, r, algebra, std::nullopt, false});
  s.node.detail = "c(eps) from Psi_1(eps) o R^" + std::to_string(l) + " in the identity orbit";
  EmergenceMap m = EngineAccess::make(t1, std::move(s), options);
  EngineAccess::certify(m);
  return m;
}

EmergenceMap emerge_composition(const GptPtr& t1, const EmergenceMap& f2, const EmergenceMap& f3,
                                const EngineOptions& options) {
  require_structure(*t1, StructureFlag::kMultiplicative, ErrorCode::kNotMultiplicative, options.seed);
  require_certified_against(t1, f2, "first map");
  require_certified_against(t1, f3, "second map");
  Synth s = combine(LemmaKind::kComposition, "composition", compose_detail(*t1), map_synth(f2), map_synth(f3));
  EmergenceMap m = EngineAccess::make(t1, std::move(s), options);
  EngineAccess::certify(m);
  return m;
}

EmergenceMap emerge_sum(const GptPtr& t1, const EmergenceMap& f2, const EmergenceMap& f3,
                        const EngineOptions& options) {
  require_structure(*t1, StructureFlag::kScalarInvariant, ErrorCode::kNotScalarInvariant, options.seed);
  require_certified_against(t1, f2, "first map");
  require_certified_against(t1, f3, "second map");
  Synth s = combine(LemmaKind::kSum, "sum", kSumDetail, map_synth(f2), map_synth(f3));
  EmergenceMap m = EngineAccess::make(t1, std::move(s), options);
  EngineAccess::certify(m);
  return m;
}

EmergenceMap emerge_accumulate(const GptPtr& t1, const std::vector<std::pair<EmergenceMap, EmergenceMap>>& pairs,
                               const EngineOptions& options) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyAccumulation, "no pairs to accumulate");
  require_structure(*t1, StructureFlag::kMultiplicative, ErrorCode::kNotMultiplicative, options.seed);
  if (pairs.size() > 1) {
    require_structure(*t1, StructureFlag::kScalarInvariant, ErrorCode::kNotScalarInvariant, options.seed);
  }
  std::optional<Synth> acc;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string at = "pair[" + std::to_string(i) + "]";
    try {
      require_certified_against(t1, pairs[i].first, "first map");
      require_certified_against(t1, pairs[i].second, "second map");
    } catch (Error& e) {
      prefix_path(e, at);
      throw;
    }
    Synth p = combine(LemmaKind::kComposition, at, compose_detail(*t1), map_synth(pairs[i].first),
                      map_synth(pairs[i].second));
    acc = acc ? combine(LemmaKind::kSum, "", kSumDetail, std::move(*acc), std::move(p)) : std::move(p);
  }
  Synth s = wrap(LemmaKind::kAccumulate, "accumulate", "left fold over " + std::to_string(pairs.size()) + " pairs",
                 std::move(*acc));
  EmergenceMap m = EngineAccess::make(t1, std::move(s), options);
  EngineAccess::certify(m);
  return m;
}

EmergenceMap emerge_univariate(const GptPtr& t1, const Ppt& t2, const EngineOptions& options) {
  return synthesize(t1, t2, options, true);
}

EmergenceMap emerge(const GptPtr& t1, const Ppt& t2, const EngineOptions& options) {
  return synthesize(t1, t2, options, false);
}

EmergenceMap direct_shared_map(const GptPtr& t1, const Ppt& t2, SharedFunction f, std::string detail,
                               const EngineOptions& options) {
  EmergenceMap m = EngineAccess::direct(t1, t2, Assignment::kShared, std::move(detail), options);
  EngineAccess::set_shared(m, std::move(f));
  EngineAccess::certify(m);
  return m;
}

EmergenceMap direct_per_term_map(const GptPtr& t1, const Ppt& t2, PerTermFunction f, std::string detail,
                                 const EngineOptions& options) {
  EmergenceMap m = EngineAccess::direct(t1, t2, Assignment::kPerTerm, std::move(detail), options);
  EngineAccess::set_per_term(m, std::move(f));
  EngineAccess::certify(m);
  return m;
}

// ---------------------------------------------------------- oracle

namespace {

// Real-linear model sym(base) + sum_j x_j sym(col_j) of a parameterized operator.
struct LinearModel {
  Matrix base;
  std::vector<Matrix> columns;
};

Eigen::VectorXd stack(const Matrix& m) {
  const long n = m.size();
  Eigen::VectorXd v(2 * n);
  for (long i = 0; i < n; ++i) {
    v(i) = m.data()[i].real();
    v(n + i) = m.data()[i].imag();
  }
  return v;
}

struct LsSolution {
  Eigen::VectorXd x;
  double residual = 0.0;
};

LsSolution least_squares(const LinearModel& model, const Matrix& target) {
  const Eigen::VectorXd b = stack(target - model.base);
  Eigen::MatrixXd a(b.size(), static_cast<long>(model.columns.size()));
  for (std::size_t j = 0; j < model.columns.size(); ++j) a.col(static_cast<long>(j)) = stack(model.columns[j]);
  LsSolution s;
  s.x = model.columns.empty() ? Eigen::VectorXd() : Eigen::VectorXd(a.completeOrthogonalDecomposition().solve(b));
  s.residual = model.columns.empty() ? b.norm() : (a * s.x - b).norm();
  return s;
}

// Coordinates of a parameter as real unknowns (re, im per coordinate unless real).
long real_unknowns(long coords, bool real) { return real ? coords : 2 * coords; }

Param param_from_real(const Eigen::VectorXd& x, long at, long coords, bool real) {
  Param p(coords);
  for (long k = 0; k < coords; ++k) {
    p(k) = real ? Scalar(x(at + k), 0.0) : Scalar(x(at + 2 * k), x(at + 2 * k + 1));
  }
  return p;
}

Param unit(long coords, long k, Scalar value) {
  Param p = Param::Zero(coords);
  p(k) = value;
  return p;
}

LinearModel per_term_model(const Ppt& t2, std::vector<std::size_t>& free_terms) {
  const auto& alg = *t2.algebra();
  const long n = alg.coord_count();
  LinearModel m;
  Operator base = Operator::zero(t2.space());
  for (std::size_t i = 0; i < t2.terms().size(); ++i) {
    if (t2.terms()[i].f.form() == CoefficientForm::kConstant) {
      base = add(base, t2.term_operator(i, alg.zero()));
      continue;
    }
    free_terms.push_back(i);
    for (long k = 0; k < n; ++k) {
      m.columns.push_back(sym_part(alg.act(unit(n, k, 1.0), t2.term_monomial(i))).matrix());
      if (!alg.real_carrier()) {
        m.columns.push_back(sym_part(alg.act(unit(n, k, Scalar(0.0, 1.0)), t2.term_monomial(i))).matrix());
      }
    }
  }
  m.base = sym_part(base).matrix();
  return m;
}

LinearModel shared_model(const Ppt& t2) {
  const auto& alg = *t2.algebra();
  const long n = alg.coord_count();
  LinearModel m;
  const Operator base = sym_part(t2.evaluate(alg.zero()));
  m.base = base.matrix();
  for (long k = 0; k < n; ++k) {
    m.columns.push_back(sym_part(t2.evaluate(unit(n, k, 1.0))).matrix() - m.base);
    if (!alg.real_carrier()) {
      m.columns.push_back(sym_part(t2.evaluate(unit(n, k, Scalar(0.0, 1.0)))).matrix() - m.base);
    }
  }
  return m;
}

bool all_affine(const Ppt& t2) {
  return std::all_of(t2.terms().begin(), t2.terms().end(), [](const PptTerm& t) { return t.f.affine_in_parameter(); });
}

// Coordinate zoom search on a box around the origin.
Eigen::VectorXd grid_search(long dims, const std::function<double(const Eigen::VectorXd&)>& objective) {
  const int points = dims == 1 ? 41 : dims == 2 ? 17 : 9;
  double radius = 8.0;
  Eigen::VectorXd center = Eigen::VectorXd::Zero(dims);
  double best_value = objective(center);
  Eigen::VectorXd best = center;
  for (int round = 0; round < 200 && radius > 1e-15; ++round) {
    const double step = 2.0 * radius / (points - 1);
    std::vector<int> idx(dims, 0);
    while (true) {
      Eigen::VectorXd x(dims);
      for (long d = 0; d < dims; ++d) x(d) = center(d) - radius + step * idx[d];
      const double v = objective(x);
      if (v < best_value) {
        best_value = v;
        best = x;
      }
      long d = 0;
      while (d < dims && ++idx[d] == points) idx[d++] = 0;
      if (d == dims) break;
    }
    center = best;
    radius = 2.0 * step;
  }
  return best;
}

}  // namespace

std::optional<BruteForceResult> brute_force_emerge(const Gpt& t1, const Ppt& t2, const Param& eps,
                                                   BruteForceSolver solver, BruteForceMode mode, double tol) {
  const auto& alg = *t2.algebra();
  const long n = alg.coord_count();
  const bool real = alg.real_carrier();
  const Operator source = t1.evaluate(eps);
  require_same_space(source, t2.slots().front(), "brute force");
  const Matrix target = sym_part(source).matrix();

  std::vector<std::size_t> free_terms;
  LinearModel model;
  bool affine = true;
  long scalar_dims = 0;
  if (mode == BruteForceMode::kPerTerm) {
    for (const auto& t : t2.terms()) scalar_dims += t.f.form() == CoefficientForm::kConstant ? 0 : n;
  } else {
    scalar_dims = n;
  }
  if (scalar_dims > 8) {
    throw Error(ErrorCode::kDimensionTooLarge, "oracle parameter dimension " + std::to_string(scalar_dims) + " > 8");
  }
  if (mode == BruteForceMode::kPerTerm) {
    model = per_term_model(t2, free_terms);
  } else {
    affine = all_affine(t2);
    if (affine) model = shared_model(t2);
  }
  const long dims = mode == BruteForceMode::kPerTerm ? static_cast<long>(model.columns.size()) : real_unknowns(n, real);

  Eigen::VectorXd x;
  if (solver == BruteForceSolver::kLeastSquares) {
    if (!affine) throw Error(ErrorCode::kBadSpec, "least squares needs coefficients affine in the parameter");
    x = least_squares(model, target).x;
  } else {
    if (dims > 3) throw Error(ErrorCode::kDimensionTooLarge, "grid search supports at most 3 real unknowns");
    auto objective = [&](const Eigen::VectorXd& y) {
      if (affine) {
        Matrix m = model.base - target;
        for (long j = 0; j < y.size(); ++j) m += y(j) * model.columns[j];
        return frobenius(m);
      }
      return quadratic_form_distance(source, t2.evaluate(param_from_real(y, 0, n, real)));
    };
    x = dims == 0 ? Eigen::VectorXd() : grid_search(dims, objective);
  }

  BruteForceResult out;
  try {
    if (mode == BruteForceMode::kPerTerm) {
      out.per_term.assign(t2.terms().size(), alg.zero());
      long at = 0;
      for (std::size_t i : free_terms) {
        const Param c = param_from_real(x, at, n, real);
        at += real_unknowns(n, real);
        out.per_term[i] = coefficient_preimage(t2.terms()[i].f, alg, c);
      }
      out.residual = quadratic_form_distance(source, t2.evaluate_per_term(out.per_term));
    } else {
      out.shared = param_from_real(x, 0, n, real);
      if (!alg.contains(out.shared)) return std::nullopt;
      out.residual = quadratic_form_distance(source, t2.evaluate(out.shared));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kNoPreimage || e.code() == ErrorCode::kNotInCarrier) return std::nullopt;
    throw;
  }
  if (!(out.residual <= tol)) return std::nullopt;
  return out;
}

// ---------------------------------------------------------- shared parameter

std::variant<EmergenceMap, ReconcileReport> reconcile_shared_parameter(const EmergenceMap& map, double tol) {
  ReconcileReport report;
  if (map.assignment() != Assignment::kPerTerm || !map.ppt()) {
    report.detail = "map has no per-term assignment";
    return report;
  }
  const Ppt& ppt = *map.ppt();
  const auto& alg = *ppt.algebra();
  const EngineOptions& o = map.options();

  std::vector<std::size_t> free_terms;
  for (std::size_t i = 0; i < ppt.terms().size(); ++i) {
    if (ppt.terms()[i].f.form() != CoefficientForm::kConstant) free_terms.push_back(i);
  }
  if (free_terms.empty()) {
    report.detail = "polynomial has no parameter-dependent term";
    return report;
  }

  Rng rng(o.seed);
  std::vector<Param> eps;
  for (int i = 0; i < o.samples; ++i) eps.push_back(map.source()->sample(rng));
  report.samples = eps.size();

  bool equal = true;
  for (const auto& e : eps) {
    const auto pt = map.per_term(e);
    for (std::size_t i : free_terms) equal = equal && (pt[i] - pt[free_terms.front()]).norm() <= tol;
    if (!equal) break;
  }
  auto base = std::make_shared<EmergenceMap>(map);
  const std::size_t first = free_terms.front();

  if (equal) {
    EmergenceMap m = EngineAccess::direct(map.source(), ppt, Assignment::kShared,
                                          "per-term parameters coincide on every sample", o);
    EngineAccess::tree(m).kind = LemmaKind::kShared;
    EngineAccess::tree(m).children.push_back(map.provenance());
    EngineAccess::set_shared(m, [base, first](const Param& e) { return base->per_term(e)[first]; });
    EngineAccess::set_certificate(m, map.certificate());
    return m;
  }

  if (!all_affine(ppt)) {
    report.detail = "per-term parameters differ and coefficients are not affine";
    return report;
  }
  const LinearModel model = shared_model(ppt);
  const bool real = alg.real_carrier();
  const long n = alg.coord_count();
  for (const auto& e : eps) {
    const auto s = least_squares(model, sym_part(map.target_operator(e)).matrix());
    report.irreducibility_residual = std::max(report.irreducibility_residual, s.residual);
  }
  if (!(report.irreducibility_residual <= tol)) {
    report.detail = "no single parameter reproduces the per-term evaluation";
    return report;
  }
  EngineOptions relaxed = o;
  relaxed.require_pass = false;
  EmergenceMap m = EngineAccess::direct(map.source(), ppt, Assignment::kShared, "least-squares shared parameter", relaxed);
  EngineAccess::tree(m).kind = LemmaKind::kShared;
  EngineAccess::tree(m).children.push_back(map.provenance());
  EngineAccess::set_shared(m, [base, model, real, n](const Param& e) {
    const auto s = least_squares(model, sym_part(base->target_operator(e)).matrix());
    return param_from_real(s.x, 0, n, real);
  });
  EngineAccess::certify(m);
  if (!m.certificate().pass) {
    report.irreducibility_residual = std::max(report.irreducibility_residual, m.certificate().max_operator_residual);
    report.detail = "shared parameter found but certificate failed";
    return report;
  }
  return m;
}

}  // namespace emergence
