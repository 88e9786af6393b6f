// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale federated learning workloads: synthetic Gaussian-blob tasks,
// linear models, poisoning attacks, share-level misbehavior, and plaintext
// baselines next to the secure aggregator.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rflpa/protocol.h"
#include "rflpa/rng.h"

namespace rflpa::fl {

struct Dataset {
  std::size_t dim = 0;
  std::size_t classes = 2;
  std::vector<double> features;  // row-major, size() x dim
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
};

// Class c is centered at separation * u_c for a random unit vector u_c (for
// two classes u_1 = -u_0), with unit isotropic noise.
struct SyntheticTask {
  std::uint64_t seed = 1;
  std::size_t feature_dim = 32;
  std::size_t classes = 2;
  std::size_t clients = 100;
  std::size_t samples_per_client = 64;
  std::size_t root_samples = 200;
  std::size_t test_samples = 1000;
  double separation = 2.0;
  // Label skew: each client draws class proportions from Dirichlet(alpha).
  std::optional<double> dirichlet_alpha;
  // With label skew, allocations are redrawn every this many iterations.
  std::size_t redraw_every = 20;

  void validate() const;
  // Model size: dim + 1 for two classes, classes * (dim + 1) otherwise.
  std::size_t parameters() const;
};

class TaskData {
 public:
  explicit TaskData(SyntheticTask task);

  const SyntheticTask& task() const { return task_; }
  const Dataset& root() const { return root_; }
  const Dataset& test() const { return test_; }
  // Client data in effect at this iteration.
  const Dataset& client(std::size_t index, std::uint64_t iteration);

 private:
  Dataset draw(std::size_t count, Rng& rng, std::span<const double> class_weights) const;

  SyntheticTask task_;
  std::vector<std::vector<double>> centers_;
  Dataset root_, test_;
  std::uint64_t block_ = ~std::uint64_t{0};
  std::vector<Dataset> clients_;
};

// Two classes: logistic regression on [weights, bias]. More classes: softmax
// regression with one [weights, bias] row per class.
std::size_t parameter_count(std::size_t dim, std::size_t classes);
// Mean cross-entropy gradient over the dataset. Throws DomainError on an
// empty dataset or a parameter size mismatch.
std::vector<double> local_gradient(const Dataset& data, std::span<const double> model);
double loss(const Dataset& data, std::span<const double> model);
double accuracy(const Dataset& data, std::span<const double> model);

// ---------------------------------------------------------------------------

std::vector<double> attack_gradient_manipulation(Rng& rng, std::size_t size, double stddev = 200.0);
// classes - label - 1; throws DomainError when label is out of range.
int attack_label_flip(int label, int classes);

enum class Behavior { kHonest, kGradientManipulation, kLabelFlip, kInvalidShares, kWrongComputation, kDropout };

struct ClientBehavior {
  Behavior kind = Behavior::kHonest;
  std::uint8_t dropout_round = 1;  // first silent round for kDropout

  bool malicious() const;
  friend bool operator==(const ClientBehavior&, const ClientBehavior&) = default;
};

std::string behavior_name(Behavior b);
Behavior parse_behavior(const std::string& name);

// round(fraction * clients) clients chosen uniformly under seed get `kind`,
// the rest are honest.
std::vector<ClientBehavior> assign_behaviors(std::size_t clients, double fraction, ClientBehavior kind,
                                             std::uint64_t seed);

// ---------------------------------------------------------------------------

enum class Aggregator { kRflpa, kFedAvg, kFlTrust, kTrimmedMean, kUnpackedRflpa };

std::string aggregator_name(Aggregator a);
Aggregator parse_aggregator(const std::string& name);

std::vector<double> fedavg(std::span<const std::vector<double>> gradients);
// Per coordinate, drop floor(trim * n) values at each end and average the rest.
std::vector<double> trimmed_mean(std::span<const std::vector<double>> gradients, double trim);

struct ExperimentConfig {
  SyntheticTask task;
  std::vector<ClientBehavior> behaviors;  // one per client; empty means all honest
  Aggregator aggregator = Aggregator::kRflpa;
  std::size_t iterations = 10;
  double learning_rate = 1.0;
  double decay = 1.0;
  double trim = 0.1;
  std::uint64_t seed = 1;
  // Secure-aggregation knobs; clients, dimension and seed are filled in.
  protocol::ProtocolConfig protocol;

  void validate() const;
};

struct RoundBytes {
  double client_sent = 0;      // mean over clients
  double client_received = 0;  // mean over clients
  std::uint64_t server_sent = 0;
  std::uint64_t server_received = 0;
};

struct IterationMetrics {
  std::uint64_t iteration = 0;
  double accuracy = 0;
  double loss = 0;
  bool aborted = false;
  std::string abort_reason;
  double trust_honest = 0;     // mean trust score of honest participants
  double trust_malicious = 0;  // mean trust score of malicious participants
  std::size_t excluded = 0;
  std::vector<RoundBytes> bytes;  // indexed by protocol round; empty for plaintext aggregators
  double client_seconds = 0;      // summed over clients
  double server_seconds = 0;
};

struct Metrics {
  std::vector<IterationMetrics> iterations;
  std::vector<double> model;
  double initial_accuracy = 0;
  double final_accuracy() const { return iterations.empty() ? initial_accuracy : iterations.back().accuracy; }
};

Metrics run_experiment(const ExperimentConfig& config);

// One row per iteration; timing is left out so equal seeds give equal bytes.
void write_metrics_csv(const Metrics& metrics, std::ostream& out);

// ---------------------------------------------------------------------------

// Loss sum_k curvature_k (w_k - optimum_k)^2 / 2; client i reports
// scale_i times the exact gradient.
struct QuadraticTask {
  std::size_t dimension = 8;
  std::size_t clients = 10;
  double min_curvature = 0.5;
  double max_curvature = 2.0;
  std::uint64_t seed = 1;
};

struct QuadraticProblem {
  std::vector<double> optimum, curvature, client_scales;
  std::vector<double> gradient(std::span<const double> w) const;
};

QuadraticProblem make_quadratic(const QuadraticTask& task);

struct ConvergenceTrace {
  std::vector<double> distance;  // |w^t - w*| after each iteration, starting with w^0
  std::size_t aborted = 0;
};

ConvergenceTrace run_quadratic(const QuadraticTask& task, protocol::ProtocolConfig config, std::size_t iterations,
                               double learning_rate);

}  // namespace rflpa::fl
