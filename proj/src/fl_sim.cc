// SPDX-License-Identifier: Apache-2.0
#include "rflpa/fl_sim.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "rflpa/errors.h"

namespace rflpa::fl {

namespace {

constexpr std::uint64_t kCentersStream = 6;
constexpr std::uint64_t kRootStream = 4;
constexpr std::uint64_t kTestStream = 5;
constexpr std::uint64_t kClientDataStream = 3;
constexpr std::uint64_t kClientSkewStream = 2;
constexpr std::uint64_t kAttackStream = 8;
constexpr std::uint64_t kProtocolStream = 7;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_model(const Dataset& data, std::span<const double> model) {
  if (data.size() == 0) throw DomainError("dataset is empty");
  if (model.size() != parameter_count(data.dim, data.classes))
    throw DomainError("model size does not match the dataset");
}

double affine(std::span<const double> row, std::span<const double> x) {
  double z = row[x.size()];
  for (std::size_t k = 0; k < x.size(); ++k) z += row[k] * x[k];
  return z;
}

// Class scores of one sample under the softmax model, as probabilities.
std::vector<double> softmax_probs(std::span<const double> model, std::span<const double> x, std::size_t classes) {
  const std::size_t width = x.size() + 1;
  std::vector<double> z(classes);
  for (std::size_t c = 0; c < classes; ++c) z[c] = affine(model.subspan(c * width, width), x);
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0;
  for (auto& v : z) sum += (v = std::exp(v - top));
  for (auto& v : z) v /= sum;
  return z;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------

void SyntheticTask::validate() const {
  if (feature_dim == 0) throw ConfigError("task.feature_dim: must be positive");
  if (classes < 2) throw ConfigError("task.classes: at least 2 required");
  if (clients == 0) throw ConfigError("task.clients: must be positive");
  if (samples_per_client == 0) throw ConfigError("task.samples_per_client: must be positive");
  if (root_samples == 0) throw ConfigError("task.root_samples: the server needs a root dataset");
  if (test_samples == 0) throw ConfigError("task.test_samples: must be positive");
  if (dirichlet_alpha && !(*dirichlet_alpha > 0)) throw ConfigError("task.dirichlet_alpha: must be positive");
  if (redraw_every == 0) throw ConfigError("task.redraw_every: must be positive");
}

std::size_t SyntheticTask::parameters() const { return parameter_count(feature_dim, classes); }

std::size_t parameter_count(std::size_t dim, std::size_t classes) {
  return classes == 2 ? dim + 1 : classes * (dim + 1);
}

TaskData::TaskData(SyntheticTask task) : task_(std::move(task)) {
  task_.validate();
  Rng rng(Rng::derive(task_.seed, kCentersStream));
  auto unit_vector = [&] {
    std::vector<double> u(task_.feature_dim);
    double norm = 0;
    while (norm == 0) {
      for (auto& x : u) x = rng.normal(0, 1);
      norm = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
    }
    for (auto& x : u) x *= task_.separation / norm;
    return u;
  };
  centers_.push_back(unit_vector());
  if (task_.classes == 2) {
    auto opposite = centers_[0];
    for (auto& x : opposite) x = -x;
    centers_.push_back(std::move(opposite));
  } else {
    for (std::size_t c = 1; c < task_.classes; ++c) centers_.push_back(unit_vector());
  }
  const std::vector<double> uniform(task_.classes, 1.0);
  Rng root_rng(Rng::derive(task_.seed, kRootStream));
  root_ = draw(task_.root_samples, root_rng, uniform);
  Rng test_rng(Rng::derive(task_.seed, kTestStream));
  test_ = draw(task_.test_samples, test_rng, uniform);
}

Dataset TaskData::draw(std::size_t count, Rng& rng, std::span<const double> class_weights) const {
  Dataset d;
  d.dim = task_.feature_dim;
  d.classes = task_.classes;
  d.features.reserve(count * d.dim);
  std::discrete_distribution<int> pick(class_weights.begin(), class_weights.end());
  for (std::size_t i = 0; i < count; ++i) {
    const int y = pick(rng);
    d.labels.push_back(y);
    for (std::size_t k = 0; k < d.dim; ++k) d.features.push_back(centers_[y][k] + rng.normal(0, 1));
  }
  return d;
}

const Dataset& TaskData::client(std::size_t index, std::uint64_t iteration) {
  if (index >= task_.clients) throw DomainError("client index out of range");
  const std::uint64_t block = task_.dirichlet_alpha ? iteration / task_.redraw_every : 0;
  if (block != block_) {
    clients_.clear();
    for (std::size_t i = 0; i < task_.clients; ++i) {
      std::vector<double> weights(task_.classes, 1.0);
      if (task_.dirichlet_alpha) {
        Rng skew(Rng::derive(task_.seed, kClientSkewStream, i, block));
        std::gamma_distribution<double> gamma(*task_.dirichlet_alpha, 1.0);
        double sum = 0;
        while (sum == 0) {
          sum = 0;
          for (auto& w : weights) sum += (w = gamma(skew));
        }
      }
      Rng rng(Rng::derive(task_.seed, kClientDataStream, i, block));
      clients_.push_back(draw(task_.samples_per_client, rng, weights));
    }
    block_ = block;
  }
  return clients_[index];
}

// ---------------------------------------------------------------------------

std::vector<double> local_gradient(const Dataset& data, std::span<const double> model) {
  check_model(data, model);
  std::vector<double> g(model.size(), 0.0);
  const std::size_t width = data.dim + 1;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    if (data.classes == 2) {
      const double r = sigmoid(affine(model, x)) - data.labels[i];
      for (std::size_t k = 0; k < data.dim; ++k) g[k] += r * x[k];
      g[data.dim] += r;
    } else {
      const auto p = softmax_probs(model, x, data.classes);
      for (std::size_t c = 0; c < data.classes; ++c) {
        const double r = p[c] - (static_cast<int>(c) == data.labels[i] ? 1.0 : 0.0);
        for (std::size_t k = 0; k < data.dim; ++k) g[c * width + k] += r * x[k];
        g[c * width + data.dim] += r;
      }
    }
  }
  for (auto& v : g) v /= static_cast<double>(data.size());
  return g;
}

double loss(const Dataset& data, std::span<const double> model) {
  check_model(data, model);
  double total = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    if (data.classes == 2) {
      const double z = affine(model, x);
      total += data.labels[i] == 1 ? softplus(-z) : softplus(z);
    } else {
      const auto p = softmax_probs(model, x, data.classes);
      total -= std::log(std::max(p[data.labels[i]], 1e-300));
    }
  }
  return total / static_cast<double>(data.size());
}

double accuracy(const Dataset& data, std::span<const double> model) {
  check_model(data, model);
  std::size_t right = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    int guess;
    if (data.classes == 2) {
      guess = affine(model, x) > 0 ? 1 : 0;
    } else {
      const auto p = softmax_probs(model, x, data.classes);
      guess = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    }
    if (guess == data.labels[i]) ++right;
  }
  return static_cast<double>(right) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------

std::vector<double> attack_gradient_manipulation(Rng& rng, std::size_t size, double stddev) {
  std::vector<double> g(size);
  for (auto& x : g) x = rng.normal(0, stddev);
  return g;
}

int attack_label_flip(int label, int classes) {
  if (classes < 1 || label < 0 || label >= classes) throw DomainError("label out of range");
  return classes - label - 1;
}

bool ClientBehavior::malicious() const {
  return kind == Behavior::kGradientManipulation || kind == Behavior::kLabelFlip ||
         kind == Behavior::kInvalidShares || kind == Behavior::kWrongComputation;
}

std::string behavior_name(Behavior b) {
  switch (b) {
    case Behavior::kHonest: return "honest";
    case Behavior::kGradientManipulation: return "gradient_manipulation";
    case Behavior::kLabelFlip: return "label_flip";
    case Behavior::kInvalidShares: return "invalid_shares";
    case Behavior::kWrongComputation: return "wrong_computation";
    case Behavior::kDropout: return "dropout";
  }
  return "unknown";
}

Behavior parse_behavior(const std::string& name) {
  for (auto b : {Behavior::kHonest, Behavior::kGradientManipulation, Behavior::kLabelFlip, Behavior::kInvalidShares,
                 Behavior::kWrongComputation, Behavior::kDropout})
    if (behavior_name(b) == name) return b;
  throw ConfigError("behavior: unknown name '" + name + "'");
}

std::vector<ClientBehavior> assign_behaviors(std::size_t clients, double fraction, ClientBehavior kind,
                                             std::uint64_t seed) {
  if (!(fraction >= 0 && fraction <= 1)) throw ConfigError("behavior fraction must lie in [0, 1]");
  std::vector<std::size_t> order(clients);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(clients)));
  std::vector<ClientBehavior> out(clients);
  for (std::size_t i = 0; i < count; ++i) out[order[i]] = kind;
  return out;
}

// ---------------------------------------------------------------------------

std::string aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::kRflpa: return "rflpa";
    case Aggregator::kFedAvg: return "fedavg";
    case Aggregator::kFlTrust: return "fltrust";
    case Aggregator::kTrimmedMean: return "trimmed_mean";
    case Aggregator::kUnpackedRflpa: return "unpacked_rflpa";
  }
  return "unknown";
}

Aggregator parse_aggregator(const std::string& name) {
  for (auto a : {Aggregator::kRflpa, Aggregator::kFedAvg, Aggregator::kFlTrust, Aggregator::kTrimmedMean,
                 Aggregator::kUnpackedRflpa})
    if (aggregator_name(a) == name) return a;
  throw ConfigError("aggregator: unknown name '" + name + "'");
}

std::vector<double> fedavg(std::span<const std::vector<double>> gradients) {
  if (gradients.empty()) throw DomainError("fedavg: no gradients");
  std::vector<double> out(gradients[0].size(), 0.0);
  for (const auto& g : gradients)
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += g.at(c);
  for (auto& v : out) v /= static_cast<double>(gradients.size());
  return out;
}

std::vector<double> trimmed_mean(std::span<const std::vector<double>> gradients, double trim) {
  if (gradients.empty()) throw DomainError("trimmed_mean: no gradients");
  if (!(trim >= 0 && trim < 0.5)) throw DomainError("trimmed_mean: trim must lie in [0, 0.5)");
  const std::size_t n = gradients.size();
  const auto cut = static_cast<std::size_t>(std::floor(trim * static_cast<double>(n)));
  std::vector<double> out(gradients[0].size()), column(n);
  for (std::size_t c = 0; c < out.size(); ++c) {
    for (std::size_t i = 0; i < n; ++i) column[i] = gradients[i].at(c);
    std::sort(column.begin(), column.end());
    double sum = 0;
    for (std::size_t i = cut; i < n - cut; ++i) sum += column[i];
    out[c] = sum / static_cast<double>(n - 2 * cut);
  }
  return out;
}

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  task.validate();
  if (!behaviors.empty() && behaviors.size() != task.clients)
    throw ConfigError("behaviors: one entry per client required");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate: must be positive");
  if (!(decay > 0)) throw ConfigError("decay: must be positive");
  if (!(trim >= 0 && trim < 0.5)) throw ConfigError("trim: must lie in [0, 0.5)");
}

namespace {

bool participates_in_plaintext(const ClientBehavior& b) {
  return !(b.kind == Behavior::kDropout && b.dropout_round <= 1);
}

}  // namespace

Metrics run_experiment(const ExperimentConfig& config) {
  config.validate();
  TaskData data(config.task);
  const std::size_t n = config.task.clients;
  const std::size_t m = config.task.parameters();
  auto behaviors = config.behaviors;
  if (behaviors.empty()) behaviors.assign(n, ClientBehavior{});

  std::unique_ptr<protocol::Session> session;
  const bool secure = config.aggregator == Aggregator::kRflpa || config.aggregator == Aggregator::kUnpackedRflpa;
  if (secure) {
    auto pc = config.protocol;
    pc.clients = n;
    pc.dimension = m;
    pc.seed = Rng::derive(config.seed, kProtocolStream);
    if (config.aggregator == Aggregator::kUnpackedRflpa) pc.pack = pc.reshare_pack = 1;
    std::map<protocol::PartyId, protocol::ClientFaults> faults;
    std::map<protocol::PartyId, std::uint8_t> dropouts;
    for (protocol::PartyId i = 0; i < n; ++i) {
      const auto& b = behaviors[i];
      if (b.kind == Behavior::kInvalidShares) faults[i].invalid_shares = true;
      if (b.kind == Behavior::kWrongComputation)
        faults[i] = {.wrong_partials = true, .wrong_final_shares = true, .wrong_aggregate = true};
      if (b.kind == Behavior::kDropout) dropouts[i] = b.dropout_round;
    }
    session = std::make_unique<protocol::Session>(pc, faults, dropouts);
  }

  Rng attack_rng(Rng::derive(config.seed, kAttackStream));
  Metrics out;
  std::vector<double> model(m, 0.0);
  out.initial_accuracy = accuracy(data.test(), model);
  double lr = config.learning_rate;
  for (std::uint64_t t = 0; t < config.iterations; ++t) {
    std::vector<std::vector<double>> grads(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& local = data.client(i, t);
      switch (behaviors[i].kind) {
        case Behavior::kGradientManipulation:
          grads[i] = attack_gradient_manipulation(attack_rng, m);
          break;
        case Behavior::kLabelFlip: {
          Dataset flipped = local;
          for (auto& y : flipped.labels) y = attack_label_flip(y, static_cast<int>(flipped.classes));
          grads[i] = local_gradient(flipped, model);
          break;
        }
        default:
          grads[i] = local_gradient(local, model);
      }
    }
    const auto server = local_gradient(data.root(), model);

    IterationMetrics it;
    it.iteration = t;
    std::vector<double> step;
    std::vector<double> honest_ts, malicious_ts;
    auto record_trust = [&](std::size_t i, double ts) {
      (behaviors[i].malicious() ? malicious_ts : honest_ts).push_back(ts);
    };
    if (secure) {
      session->mailbox().reset_counters();
      protocol::IterationInput in{t, model, server, grads};
      auto r = session->run_iteration(in);
      it.aborted = r.aborted;
      it.abort_reason = r.abort_reason;
      it.excluded = r.excluded.size();
      if (!r.aborted) {
        step = r.gradient;
        for (auto i : r.respondents[1])
          record_trust(i, static_cast<double>(r.trust_numerators[i]) / static_cast<double>(r.trust_denominator));
      }
      for (std::uint8_t round = 0; round <= 4; ++round) {
        RoundBytes rb;
        for (protocol::PartyId i = 0; i < n; ++i) {
          const auto c = session->mailbox().count(i, round);
          rb.client_sent += static_cast<double>(c.sent);
          rb.client_received += static_cast<double>(c.received);
        }
        rb.client_sent /= static_cast<double>(n);
        rb.client_received /= static_cast<double>(n);
        const auto s = session->mailbox().count(channel::kServer, round);
        rb.server_sent = s.sent;
        rb.server_received = s.received;
        it.bytes.push_back(rb);
      }
      for (const auto& [round, times] : r.times) {
        it.client_seconds += times.client_seconds;
        it.server_seconds += times.server_seconds;
      }
    } else {
      std::vector<std::vector<double>> present;
      std::vector<std::size_t> ids;
      for (std::size_t i = 0; i < n; ++i)
        if (participates_in_plaintext(behaviors[i])) {
          present.push_back(grads[i]);
          ids.push_back(i);
        }
      if (present.empty()) {
        it.aborted = true;
        it.abort_reason = "no participating clients";
      } else if (config.aggregator == Aggregator::kFedAvg) {
        step = fedavg(present);
      } else if (config.aggregator == Aggregator::kTrimmedMean) {
        step = trimmed_mean(present, config.trim);
      } else {
        auto agg = protocol::fltrust_aggregate(present, server);
        step = agg.gradient;
        for (std::size_t k = 0; k < ids.size(); ++k) record_trust(ids[k], agg.trust[k]);
      }
    }
    if (!it.aborted)
      for (std::size_t c = 0; c < m; ++c) model[c] -= lr * step[c];
    it.trust_honest = mean(honest_ts);
    it.trust_malicious = mean(malicious_ts);
    it.accuracy = accuracy(data.test(), model);
    it.loss = loss(data.test(), model);
    out.iterations.push_back(std::move(it));
    lr *= config.decay;
  }
  out.model = std::move(model);
  return out;
}

void write_metrics_csv(const Metrics& metrics, std::ostream& out) {
  out << "iteration,accuracy,loss,aborted,trust_honest,trust_malicious,excluded,"
         "client_bytes_sent,client_bytes_received,server_bytes_sent,server_bytes_received\n";
  const auto flags = out.flags();
  out << std::setprecision(12);
  for (const auto& it : metrics.iterations) {
    double cs = 0, cr = 0;
    std::uint64_t ss = 0, sr = 0;
    for (const auto& b : it.bytes) {
      cs += b.client_sent;
      cr += b.client_received;
      ss += b.server_sent;
      sr += b.server_received;
    }
    out << it.iteration << ',' << it.accuracy << ',' << it.loss << ',' << (it.aborted ? 1 : 0) << ','
        << it.trust_honest << ',' << it.trust_malicious << ',' << it.excluded << ',' << cs << ',' << cr << ','
        << ss << ',' << sr << '\n';
  }
  out.flags(flags);
}

// ---------------------------------------------------------------------------

std::vector<double> QuadraticProblem::gradient(std::span<const double> w) const {
  std::vector<double> g(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) g[k] = curvature[k] * (w[k] - optimum[k]);
  return g;
}

QuadraticProblem make_quadratic(const QuadraticTask& task) {
  if (task.dimension == 0 || task.clients == 0) throw ConfigError("quadratic: dimension and clients must be positive");
  if (!(task.min_curvature > 0 && task.max_curvature >= task.min_curvature))
    throw ConfigError("quadratic: curvature range must be positive and ordered");
  Rng rng(task.seed);
  QuadraticProblem p;
  for (std::size_t k = 0; k < task.dimension; ++k) {
    p.optimum.push_back(rng.normal(0, 0.5));
    p.curvature.push_back(task.min_curvature + (task.max_curvature - task.min_curvature) * rng.unit());
  }
  for (std::size_t i = 0; i < task.clients; ++i) p.client_scales.push_back(0.5 + 1.5 * rng.unit());
  return p;
}

ConvergenceTrace run_quadratic(const QuadraticTask& task, protocol::ProtocolConfig config, std::size_t iterations,
                               double learning_rate) {
  const auto problem = make_quadratic(task);
  config.clients = task.clients;
  config.dimension = task.dimension;
  protocol::Session session(config);
  protocol::GradientSource source{
      [&](std::span<const double> w, std::uint64_t) { return problem.gradient(w); },
      [&](std::span<const double> w, std::uint64_t) {
        const auto g = problem.gradient(w);
        std::vector<std::vector<double>> out;
        for (double s : problem.client_scales) {
          out.push_back(g);
          for (auto& x : out.back()) x *= s;
        }
        return out;
      }};
  auto distance = [&](std::span<const double> w) {
    double s = 0;
    for (std::size_t k = 0; k < w.size(); ++k) s += (w[k] - problem.optimum[k]) * (w[k] - problem.optimum[k]);
    return std::sqrt(s);
  };
  const std::vector<double> start(task.dimension, 0.0);
  ConvergenceTrace trace;
  trace.distance.push_back(distance(start));
  for (const auto& step : protocol::train_loop(session, start, source, {iterations, learning_rate, 1.0})) {
    trace.distance.push_back(distance(step.model));
    if (step.result.aborted) ++trace.aborted;
  }
  return trace;
}

}  // namespace rflpa::fl
