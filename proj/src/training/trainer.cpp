#include "etd/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "etd/error.hpp"
#include "etd/numerics/adam.hpp"
#include "etd/numerics/ops.hpp"
#include "etd/numerics/rng.hpp"
#include "etd/oracle/flops.hpp"
#include "etd/training/losses.hpp"

namespace etd::train {

std::string_view to_string(Monitor m) {
  switch (m) {
    case Monitor::MacroF1: return "macro_f1";
    case Monitor::JointAccuracy: return "joint_accuracy";
    case Monitor::IllicitF1: return "illicit_f1";
  }
  return "macro_f1";
}

Monitor parse_monitor(std::string_view s) {
  for (auto m : {Monitor::MacroF1, Monitor::JointAccuracy, Monitor::IllicitF1}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("monitor: unknown value '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (patience == 0) throw ConfigError("patience must be at least 1");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["monitor"] = std::string(to_string(c.monitor));
  return j;
}

TrainConfig train_config_from_json(const nlohmann::ordered_json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  auto read_size = [&](const char* key, auto& out) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number_unsigned()) throw ConfigError(std::string(key) + " must be a non-negative integer");
      out = it->get<std::remove_reference_t<decltype(out)>>();
    }
  };
  auto read_double = [&](const char* key, double& out) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number()) throw ConfigError(std::string(key) + " must be a number");
      out = it->get<double>();
    }
  };
  read_double("lr", c.lr);
  read_double("weight_decay", c.weight_decay);
  read_size("batch_size", c.batch_size);
  read_size("max_epochs", c.max_epochs);
  read_size("patience", c.patience);
  read_size("seed", c.seed);
  if (auto it = j.find("monitor"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("monitor must be a string");
    c.monitor = parse_monitor(it->get<std::string>());
  }
  return c;
}

std::size_t LabeledUnit::masked() const {
  std::size_t n = 0;
  for (auto m : mask) n += m;
  return n;
}

LabeledUnit make_unit(fhg::FullHistoryGraph g, std::size_t window, net::HeadKind head, std::string name) {
  LabeledUnit u;
  u.name = std::move(name);
  const std::size_t n = g.num_nodes();
  u.mask.assign(n, 0);
  u.speed.assign(n, 0);
  u.dir.assign(n, 0);
  u.binary.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = g.node(i);
    if (!node.label) continue;
    if (const auto* d = std::get_if<fhg::DualLabel>(&*node.label)) {
      u.speed[i] = d->speed;
      u.dir[i] = d->dir;
      if (node.mask && head != net::HeadKind::DualClass) {
        throw ContractError("node " + node.id.str() + " carries a speed/direction label but the head is binary");
      }
    } else {
      u.binary[i] = std::get<fhg::BinaryLabel>(*node.label).value;
      if (node.mask && head != net::HeadKind::Binary) {
        throw ContractError("node " + node.id.str() + " carries a binary label but the head is dual");
      }
    }
    u.mask[i] = node.mask ? 1 : 0;
  }
  u.plan = net::make_plan(g, window);
  u.graph = std::move(g);
  return u;
}

Tensor unit_loss(const net::ModelOutput& out, const LabeledUnit& u, net::HeadKind head) {
  if (head == net::HeadKind::DualClass) return dual_cross_entropy(out.speed, out.dir, u.speed, u.dir, u.mask);
  return masked_bce(out.binary, u.binary, u.mask);
}

namespace {

int argmax_row(const Tensor& t, std::size_t r) {
  int best = 0;
  for (std::size_t j = 1; j < t.cols(); ++j) {
    if (t.at(r, j) > t.at(r, static_cast<std::size_t>(best))) best = static_cast<int>(j);
  }
  return best;
}

double sigmoid(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

Evaluation evaluate(const net::ModelConfig& cfg, const net::EtdnetParams& params, std::span<const LabeledUnit> units,
                    Monitor monitor, std::optional<double> threshold) {
  const bool dual = cfg.head == net::HeadKind::DualClass;
  if (dual && monitor == Monitor::IllicitF1) throw ConfigError("monitor illicit_f1 needs the binary head");
  if (!dual && monitor == Monitor::JointAccuracy) throw ConfigError("monitor joint_accuracy needs the dual head");

  std::vector<int> sp, st, dp, dt, labels;
  std::vector<double> probs;
  double loss_sum = 0.0;
  std::size_t total = 0;
  for (const auto& u : units) {
    const std::size_t m = u.masked();
    if (m == 0) continue;
    auto out = net::forward(u.plan, cfg, params, {});
    loss_sum += unit_loss(out, u, cfg.head).item() * static_cast<double>(m);
    total += m;
    for (std::size_t i = 0; i < u.mask.size(); ++i) {
      if (!u.mask[i]) continue;
      if (dual) {
        sp.push_back(argmax_row(out.speed, i));
        st.push_back(u.speed[i]);
        dp.push_back(argmax_row(out.dir, i));
        dt.push_back(u.dir[i]);
      } else {
        probs.push_back(sigmoid(out.binary.data()[i]));
        labels.push_back(static_cast<int>(u.binary[i]));
      }
    }
  }
  if (total == 0) throw EmptyBatchError("evaluation set has no masked nodes");

  Evaluation ev;
  ev.loss = loss_sum / static_cast<double>(total);
  if (dual) {
    ev.dual = dual_metrics(sp, st, dp, dt);
    ev.metrics = {{"macro_f1", ev.dual->macro_f1},
                  {"joint_accuracy", ev.dual->joint_accuracy},
                  {"speed_macro_f1", ev.dual->speed_macro_f1},
                  {"dir_macro_f1", ev.dual->dir_macro_f1}};
    ev.monitor = monitor == Monitor::JointAccuracy ? ev.dual->joint_accuracy : ev.dual->macro_f1;
  } else {
    const double t = threshold ? *threshold : best_threshold(probs, labels);
    ev.binary = binary_metrics(probs, labels, t);
    ev.metrics = {{"illicit_f1", ev.binary->illicit_f1},
                  {"macro_f1", ev.binary->macro_f1},
                  {"roc_auc", ev.binary->roc_auc},
                  {"auprc", ev.binary->auprc},
                  {"threshold", ev.binary->threshold}};
    ev.monitor = monitor == Monitor::IllicitF1 ? ev.binary->illicit_f1 : ev.binary->macro_f1;
  }
  return ev;
}

TrainResult train(const net::ModelConfig& cfg, const net::EtdnetParams& init, std::span<const LabeledUnit> train_units,
                  std::span<const LabeledUnit> val_units, const TrainConfig& tcfg, const EpochCallback& on_epoch) {
  cfg.validate();
  tcfg.validate();
  net::check_consistent(cfg, init);
  if (val_units.empty()) throw EmptyBatchError("training needs at least one validation unit");

  net::EtdnetParams params = init.clone();
  AdamConfig acfg;
  acfg.lr = tcfg.lr;
  acfg.weight_decay = tcfg.weight_decay;
  AdamState state(acfg);

  std::uint64_t flops = 0;
  for (const auto& u : train_units) flops += oracle::count_flops(u.graph, cfg).total;

  std::vector<std::size_t> order(train_units.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(hash_combine(tcfg.seed, epoch));
    rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t loss_nodes = 0;
    for (std::size_t b0 = 0, batch = 1; b0 < order.size(); b0 += tcfg.batch_size, ++batch) {
      const std::size_t b1 = std::min(order.size(), b0 + tcfg.batch_size);
      std::size_t batch_nodes = 0;
      for (std::size_t i = b0; i < b1; ++i) batch_nodes += train_units[order[i]].masked();
      if (batch_nodes == 0) continue;
      params.zero_grad();
      for (std::size_t i = b0; i < b1; ++i) {
        const auto& u = train_units[order[i]];
        const std::size_t m = u.masked();
        if (m == 0) continue;
        net::ForwardOptions opt{true, tcfg.seed, epoch, order[i]};
        Tensor loss = unit_loss(net::forward(u.plan, cfg, params, opt), u, cfg.head);
        if (!std::isfinite(loss.item())) {
          throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) + " unit " +
                             (u.name.empty() ? std::to_string(order[i]) : u.name) + ": loss is not finite");
        }
        loss_sum += loss.item() * static_cast<double>(m);
        loss_nodes += m;
        // weight m/M turns per-unit means into a mean over the batch's masked nodes
        ops::scale(loss, static_cast<double>(m) / static_cast<double>(batch_nodes)).backward();
      }
      try {
        adam_step(params.named(), state);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) + ": " + e.what());
      }
    }
    params.zero_grad();

    EpochReport rep;
    rep.epoch = epoch;
    rep.loss = loss_nodes ? loss_sum / static_cast<double>(loss_nodes) : 0.0;
    auto ev = evaluate(cfg, params, val_units, tcfg.monitor);
    rep.metrics = ev.metrics;
    rep.monitor = ev.monitor;
    rep.flops = flops;
    rep.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.reports.push_back(rep);
    if (on_epoch) on_epoch(rep);

    if (epoch == 1 || rep.monitor > result.best_monitor) {
      result.best = params.clone();
      result.best_epoch = epoch;
      result.best_monitor = rep.monitor;
    } else if (epoch - result.best_epoch >= tcfg.patience) {
      break;
    }
  }
  return result;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_metrics_csv(std::ostream& out, std::span<const EpochReport> reports) {
  out << "epoch,loss";
  if (!reports.empty()) {
    for (const auto& [name, _] : reports.front().metrics) out << ',' << name;
  }
  out << ",flops\n";
  for (const auto& r : reports) {
    out << r.epoch << ',' << format_number(r.loss);
    for (const auto& [_, v] : r.metrics) {
      out << ',';
      if (v) out << format_number(*v);
    }
    out << ',' << r.flops << '\n';
  }
}

void write_timing_csv(std::ostream& out, std::span<const EpochReport> reports) {
  out << "epoch,wall_ms\n";
  for (const auto& r : reports) out << r.epoch << ',' << format_number(r.wall_ms) << '\n';
}

}  // namespace etd::train
