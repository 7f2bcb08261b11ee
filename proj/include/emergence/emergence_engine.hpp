#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "emergence/theories.hpp"

namespace emergence {

struct EngineOptions {
  double tol = 1e-8;           // certificate tolerance
  int samples = 16;            // certificate samples
  std::uint64_t seed = 42;
  int jobs = 1;
  bool require_pass = true;    // constructors throw unless the certificate passes
  InverseMethod inverse_method = InverseMethod::kAuto;
  double inverse_tol = kDefaultTol;
  double orbit_tol = kDefaultTol;  // identity-orbit solve tolerance
};

struct Certificate {
  std::size_t samples = 0;
  double max_functional_residual = 0.0;    // relative
  double max_operator_residual = 0.0;      // ||sym_1 - sym_2||_F
  double max_raw_operator_residual = 0.0;  // ||Psi_1 - Psi_2||_F, diagnostic only
  double tol = 0.0;
  std::uint64_t seed = 0;
  bool pass = false;
  // Set when evaluating the map threw at some sample.
  std::optional<ErrorCode> failure_code;
  std::string failure;
  std::string failure_path;
  std::optional<double> failure_residual;

  Json to_json() const;
  static Certificate from_json(const Json& j);
  bool operator==(const Certificate&) const = default;
};

enum class LemmaKind { kMonomial, kComposition, kSum, kUnivariate, kAccumulate, kMultivariate, kDirect, kShared };

std::string_view lemma_kind_name(LemmaKind kind);

struct ProvenanceNode {
  LemmaKind kind = LemmaKind::kMonomial;
  std::string label;
  std::string detail;            // branch choice, deviation notes
  std::optional<std::size_t> leaf;
  std::vector<ProvenanceNode> children;

  int depth() const;
  Json to_json() const;
};

// Target GPT g(d) Psi at one monomial node.
struct Leaf {
  std::string label;
  CoefficientFunction f;
  Operator op;
  Operator right_inverse;
  AlgebraPtr algebra;
  std::optional<std::size_t> term;  // PPT term this leaf carries
  bool auxiliary = false;           // unit-coefficient factor absorbed at realization

  Json to_json() const;
};

enum class Assignment { kLeaves, kPerTerm, kShared };

std::string_view assignment_name(Assignment a);

using SharedFunction = std::function<Param(const Param&)>;
using PerTermFunction = std::function<std::vector<Param>(const Param&)>;
using TargetFunction = std::function<Operator(const Param&)>;

class EmergenceMap {
 public:
  Assignment assignment() const { return assignment_; }
  const GptPtr& source() const { return source_; }
  // Structural target built from the lemma tree; null for direct maps.
  const GptPtr& target_gpt() const { return target_gpt_; }
  const std::optional<Ppt>& ppt() const { return ppt_; }
  const ProvenanceNode& provenance() const { return tree_; }
  const std::vector<Leaf>& leaves() const { return leaves_; }
  const Certificate& certificate() const { return certificate_; }
  const EngineOptions& options() const { return options_; }

  // Leaf parameters in tree order.
  std::vector<Param> leaf_parameters(const Param& eps) const;
  std::vector<Param> per_term(const Param& eps) const;
  Param shared(const Param& eps) const;
  // The assignment flattened to one coordinate vector.
  Param flat(const Param& eps) const;
  Operator target_operator(const Param& eps) const;

  Json to_json() const;
  // Assignment at eps as numeric arrays.
  Json assignment_json(const Param& eps) const;

 private:
  friend struct EngineAccess;
  EmergenceMap() = default;

  struct Product {
    std::vector<std::size_t> leaves;
    std::size_t term = 0;
  };

  void evaluate_leaves(const Param& eps, std::vector<Param>& c, std::vector<Param>& delta) const;

  Assignment assignment_ = Assignment::kLeaves;
  GptPtr source_;
  GptPtr target_gpt_;
  std::optional<Ppt> ppt_;
  ProvenanceNode tree_;
  std::vector<Leaf> leaves_;
  std::vector<Product> products_;
  PerTermFunction direct_per_term_;
  SharedFunction direct_shared_;
  Certificate certificate_;
  EngineOptions options_;
};

// ---- lemma constructors; each returns a certified map ----

// T1 emerges from d -> act(g(d), Psi^l) over `algebra` (complex scalars by default).
EmergenceMap emerge_monomial(const GptPtr& t1, const CoefficientFunction& g, const Operator& psi, int l,
                             const EngineOptions& options = {}, AlgebraPtr algebra = nullptr);
EmergenceMap emerge_composition(const GptPtr& t1, const EmergenceMap& f2, const EmergenceMap& f3,
                                const EngineOptions& options = {});
EmergenceMap emerge_sum(const GptPtr& t1, const EmergenceMap& f2, const EmergenceMap& f3,
                        const EngineOptions& options = {});
EmergenceMap emerge_accumulate(const GptPtr& t1, const std::vector<std::pair<EmergenceMap, EmergenceMap>>& pairs,
                               const EngineOptions& options = {});
EmergenceMap emerge_univariate(const GptPtr& t1, const Ppt& t2, const EngineOptions& options = {});
EmergenceMap emerge(const GptPtr& t1, const Ppt& t2, const EngineOptions& options = {});

// Maps given by an explicit assignment rule, certified like the others.
EmergenceMap direct_shared_map(const GptPtr& t1, const Ppt& t2, SharedFunction f, std::string detail,
                               const EngineOptions& options = {});
EmergenceMap direct_per_term_map(const GptPtr& t1, const Ppt& t2, PerTermFunction f, std::string detail,
                                 const EngineOptions& options = {});

// ---- verification ----

Certificate verify_operators(const Gpt& t1, const TargetFunction& target, int samples, double tol,
                             std::uint64_t seed, int jobs = 1);
Certificate verify_emergence(const EmergenceMap& map, int samples, double tol, std::uint64_t seed, int jobs = 1);
Certificate verify_emergence(const Gpt& t1, const Ppt& t2, const SharedFunction& f, int samples, double tol,
                             std::uint64_t seed, int jobs = 1);

// ---- oracle ----

enum class BruteForceSolver { kLeastSquares, kGridSearch };
enum class BruteForceMode { kPerTerm, kShared };

struct BruteForceResult {
  std::vector<Param> per_term;  // per-term mode
  Param shared;                 // shared mode
  double residual = 0.0;        // ||sym_1 - sym_2||_F at the minimizer
};

// Minimizes the quadratic-form mismatch at one source parameter.
std::optional<BruteForceResult> brute_force_emerge(const Gpt& t1, const Ppt& t2, const Param& eps,
                                                   BruteForceSolver solver = BruteForceSolver::kLeastSquares,
                                                   BruteForceMode mode = BruteForceMode::kPerTerm,
                                                   double tol = 1e-8);

// Quadratic-form distance between two operators.
double quadratic_form_distance(const Operator& a, const Operator& b);

// ---- shared parameter ----

struct ReconcileReport {
  std::size_t samples = 0;
  double irreducibility_residual = 0.0;
  std::string detail;
};

std::variant<EmergenceMap, ReconcileReport> reconcile_shared_parameter(const EmergenceMap& map, double tol = 1e-8);

}  // namespace emergence
