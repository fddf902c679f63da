#include "treebp/plan.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace treebp {

using nlohmann::json;

const char* arch_name(Arch a) {
  switch (a) {
    case Arch::Tree3: return "tree3";
    case Arch::LeNet5: return "lenet5";
    case Arch::TenTree: return "tentree";
  }
  return "?";
}

const char* mode_name(Mode m) { return m == Mode::Offline ? "offline" : "online"; }

void TrainPlan::validate() const {
  if (name.empty()) throw ConfigError("plan: name must not be empty");
  hp.validate();
  schedule.validate();
  if (epochs < 1) throw ConfigError("plan '" + name + "': epochs must be >= 1");
  if (mode == Mode::Online && epochs != 1) {
    throw ConfigError("plan '" + name + "': online mode implies epochs == 1");
  }
  if (epochs > schedule.covered_epochs()) {
    throw ConfigError("plan '" + name + "': schedule covers only [0, " +
                      std::to_string(schedule.covered_epochs()) + ") of " +
                      std::to_string(epochs) + " epochs");
  }
  if (threshold < 0.0) throw ConfigError("plan '" + name + "': threshold must be >= 0");
  if (augment.max_shift < 0) throw ConfigError("plan '" + name + "': augment shift < 0");
  if (arch == Arch::LeNet5) {
    lenet.validate();
  } else {
    tree.validate();
  }
  if (pruned_bp && arch == Arch::Tree3 && tree.activation != Activation::ReLU) {
    throw ConfigError("plan '" + name + "': pruned_bp requires ReLU activation");
  }
}

namespace {

json schedule_to_json(const Schedule& s) {
  json j;
  if (s.kind == Schedule::Kind::Piecewise) {
    j["kind"] = "piecewise";
    json segs = json::array();
    for (const auto& seg : s.segments) segs.push_back({seg.begin, seg.end, seg.eta});
    j["segments"] = segs;
  } else {
    j["kind"] = "geometric";
    j["eta0"] = s.eta0;
    j["factor"] = s.factor;
    j["period"] = s.period;
  }
  if (s.decay_switch) {
    j["decay_switch"] = {{"epoch", s.decay_switch->epoch},
                         {"alpha", s.decay_switch->alpha}};
  }
  return j;
}

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ConfigError(std::string("plan json: missing field '") + key + "'");
  }
  return *it;
}

Schedule schedule_from_json(const json& j) {
  Schedule s;
  const std::string kind = require(j, "kind").get<std::string>();
  if (kind == "piecewise") {
    s.kind = Schedule::Kind::Piecewise;
    for (const auto& seg : require(j, "segments")) {
      if (!seg.is_array() || seg.size() != 3) {
        throw ConfigError("plan json: schedule segment must be [begin, end, eta]");
      }
      s.segments.push_back({seg[0].get<int>(), seg[1].get<int>(), seg[2].get<double>()});
    }
  } else if (kind == "geometric") {
    s.kind = Schedule::Kind::Geometric;
    s.eta0 = require(j, "eta0").get<double>();
    s.factor = require(j, "factor").get<double>();
    s.period = require(j, "period").get<int>();
  } else {
    throw ConfigError("plan json: unknown schedule kind '" + kind + "'");
  }
  if (j.contains("decay_switch")) {
    const auto& d = j["decay_switch"];
    s.decay_switch = Schedule::DecaySwitch{require(d, "epoch").get<int>(),
                                           require(d, "alpha").get<double>()};
  }
  return s;
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("plan json: unknown activation '" + s + "'");
}

json plan_to_json(const TrainPlan& p) {
  json j;
  j["name"] = p.name;
  if (!p.note.empty()) j["note"] = p.note;
  j["arch"] = arch_name(p.arch);
  if (p.arch == Arch::LeNet5) {
    j["c1"] = p.lenet.c1;
    j["c2"] = p.lenet.c2;
    j["f1"] = p.lenet.f1;
    j["f2"] = p.lenet.f2;
    j["bias"] = p.lenet.bias;
    j["activation"] = activation_name(p.lenet.activation);
  } else {
    j["k"] = p.tree.k;
    j["m"] = p.tree.m;
    j["geometry"] = geometry_name(p.tree.geometry);
    j["activation"] = activation_name(p.tree.activation);
  }
  j["eta"] = p.hp.eta;
  j["mu"] = p.hp.mu;
  j["alpha"] = p.hp.alpha;
  j["batch"] = p.hp.batch;
  j["epochs"] = p.epochs;
  j["mode"] = mode_name(p.mode);
  j["dataset_size"] = p.dataset_size;
  j["schedule"] = schedule_to_json(p.schedule);
  j["augment_shift"] = p.augment.max_shift;
  j["augment_flip"] = p.augment.hflip;
  j["seed"] = p.seed;
  j["pruned_bp"] = p.pruned_bp;
  j["threshold"] = p.threshold;
  return j;
}

TrainPlan plan_from_json(const json& j) {
  TrainPlan p;
  p.name = require(j, "name").get<std::string>();
  p.note = j.value("note", std::string());
  const std::string arch = require(j, "arch").get<std::string>();
  if (arch == "tree3") {
    p.arch = Arch::Tree3;
  } else if (arch == "lenet5") {
    p.arch = Arch::LeNet5;
  } else if (arch == "tentree") {
    p.arch = Arch::TenTree;
  } else {
    throw ConfigError("plan json: unknown arch '" + arch + "'");
  }
  if (p.arch == Arch::LeNet5) {
    p.lenet.c1 = j.value("c1", std::size_t(6));
    p.lenet.c2 = j.value("c2", std::size_t(16));
    p.lenet.f1 = j.value("f1", std::size_t(120));
    p.lenet.f2 = j.value("f2", std::size_t(84));
    p.lenet.bias = j.value("bias", true);
    p.lenet.activation = activation_from_string(require(j, "activation").get<std::string>());
  } else {
    p.tree.k = require(j, "k").get<std::size_t>();
    p.tree.m = require(j, "m").get<std::size_t>();
    const std::string geo = require(j, "geometry").get<std::string>();
    if (geo == "cifar") {
      p.tree.geometry = Geometry::CIFAR;
    } else if (geo == "mnist") {
      p.tree.geometry = Geometry::MNIST;
    } else {
      throw ConfigError("plan json: unknown geometry '" + geo + "'");
    }
    p.tree.activation = activation_from_string(require(j, "activation").get<std::string>());
  }
  p.hp.eta = require(j, "eta").get<double>();
  p.hp.mu = require(j, "mu").get<double>();
  p.hp.alpha = require(j, "alpha").get<double>();
  p.hp.batch = require(j, "batch").get<std::size_t>();
  p.epochs = require(j, "epochs").get<int>();
  const std::string mode = j.value("mode", std::string("offline"));
  if (mode == "offline") {
    p.mode = Mode::Offline;
  } else if (mode == "online") {
    p.mode = Mode::Online;
  } else {
    throw ConfigError("plan json: unknown mode '" + mode + "'");
  }
  p.dataset_size = j.value("dataset_size", std::size_t(0));
  p.schedule = schedule_from_json(require(j, "schedule"));
  p.augment.max_shift = j.value("augment_shift", 0);
  p.augment.hflip = j.value("augment_flip", false);
  p.seed = j.value("seed", std::uint64_t(1));
  p.pruned_bp = j.value("pruned_bp", false);
  p.threshold = j.value("threshold", 0.0);
  p.validate();
  return p;
}

Schedule piecewise(std::vector<Schedule::Segment> segments,
                   std::optional<Schedule::DecaySwitch> sw = std::nullopt) {
  Schedule s;
  s.kind = Schedule::Kind::Piecewise;
  s.segments = std::move(segments);
  s.decay_switch = sw;
  return s;
}

Schedule geometric(double eta0, double factor, int period,
                   std::optional<Schedule::DecaySwitch> sw = std::nullopt) {
  Schedule s;
  s.kind = Schedule::Kind::Geometric;
  s.eta0 = eta0;
  s.factor = factor;
  s.period = period;
  s.decay_switch = sw;
  return s;
}

std::vector<TrainPlan> make_builtin_plans() {
  std::vector<TrainPlan> plans;
  const Schedule::DecaySwitch tree_decay{50, 1e-5};

  {
    TrainPlan p;
    p.name = "lenet5-offline";
    p.note = "feedforward baseline, 200-epoch CIFAR-10 run";
    p.arch = Arch::LeNet5;
    p.hp = {0.1, 0.9, 1e-4, 100};
    p.schedule = piecewise({{0, 100, 0.01}, {100, 150, 0.005}, {150, 200, 0.001}});
    p.epochs = 200;
    p.augment = {2, true};
    plans.push_back(p);
  }
  {
    TrainPlan p;
    p.name = "tree3-k6m16-offline";
    p.note = "tree net K=6 M=16, 200-epoch CIFAR-10 run";
    p.tree = {6, 16, Activation::Sigmoid, Geometry::CIFAR};
    p.hp = {0.075, 0.965, 5e-5, 100};
    p.schedule = piecewise({{0, 50, 0.075},
                            {50, 70, 0.05},
                            {70, 100, 0.01},
                            {100, 150, 0.005},
                            {150, 175, 0.001},
                            {175, 200, 0.0001}},
                           tree_decay);
    p.epochs = 200;
    p.augment = {2, true};
    plans.push_back(p);
  }
  {
    TrainPlan p;
    p.name = "tree3-k15m16-offline";
    p.note = "tree net K=15 M=16, 200-epoch CIFAR-10 run";
    p.tree = {15, 16, Activation::Sigmoid, Geometry::CIFAR};
    p.hp = {0.075, 0.965, 5e-5, 100};
    p.schedule = piecewise({{0, 50, 0.075},
                            {50, 70, 0.05},
                            {70, 100, 0.01},
                            {100, 150, 0.0075},
                            {150, 200, 0.003}},
                           tree_decay);
    p.epochs = 200;
    p.augment = {2, true};
    plans.push_back(p);
  }
  {
    TrainPlan p;
    p.name = "tree3-k15m80-offline";
    p.note = "tree net K=15 M=80, 200-epoch CIFAR-10 run, ReLU";
    p.tree = {15, 80, Activation::ReLU, Geometry::CIFAR};
    p.hp = {0.075, 0.965, 5e-5, 100};
    p.schedule = geometric(0.075, 0.6, 20, tree_decay);
    p.epochs = 200;
    p.augment = {4, true};
    p.pruned_bp = true;
    plans.push_back(p);
  }
  {
    TrainPlan p;
    p.name = "tentree-k15m80-offline";
    p.note = "ten single-output tree nets sharing one conv layer, K=15 M=80";
    p.arch = Arch::TenTree;
    p.tree = {15, 80, Activation::ReLU, Geometry::CIFAR};
    p.hp = {0.05, 0.97, 5e-5, 100};
    p.schedule = geometric(0.05, 0.6, 20, tree_decay);
    p.epochs = 200;
    p.augment = {4, true};
    plans.push_back(p);
  }
  {
    TrainPlan p;
    p.name = "tree3-mnist";
    p.note = "tree net K=15 M=16 on MNIST";
    p.tree = {15, 16, Activation::ReLU, Geometry::MNIST};
    p.hp = {0.1, 0.9, 5e-4, 100};
    p.schedule = piecewise({{0, 50, 0.075},
                            {50, 70, 0.05},
                            {70, 100, 0.01},
                            {100, 150, 0.0075},
                            {150, 200, 0.003}},
                           tree_decay);
    p.epochs = 200;
    p.augment = {2, false};
    p.pruned_bp = true;
    plans.push_back(p);
  }

  const struct {
    const char* name;
    std::size_t examples;
    std::size_t batch;
    double eta, mu, alpha;
  } lenet_online[] = {
      {"lenet5-online-50k", 50000, 100, 0.012, 0.96, 1e-4},
      {"lenet5-online-25k", 25000, 100, 0.017, 0.96, 3e-3},
      {"lenet5-online-12k", 12500, 50, 0.012, 0.94, 8e-3},
  };
  for (const auto& cfg : lenet_online) {
    TrainPlan p;
    p.name = cfg.name;
    p.note = "single-pass CIFAR-10 run, feedforward baseline";
    p.arch = Arch::LeNet5;
    p.hp = {cfg.eta, cfg.mu, cfg.alpha, cfg.batch};
    p.schedule = piecewise({{0, 1, cfg.eta}});
    p.epochs = 1;
    p.mode = Mode::Online;
    p.dataset_size = cfg.examples;
    plans.push_back(p);
  }

  const struct {
    const char* name;
    std::size_t examples;
    std::size_t batch;
    double eta, mu, alpha;
  } tree_online[] = {
      {"tree3-online-50k", 50000, 100, 0.02, 0.965, 5e-7},
      {"tree3-online-25k", 25000, 100, 0.03, 0.965, 5e-6},
      {"tree3-online-12k", 12500, 50, 0.02, 0.965, 5e-5},
  };
  for (const auto& cfg : tree_online) {
    TrainPlan p;
    p.name = cfg.name;
    p.note = "single-pass CIFAR-10 run, tree net K=15 M=16, ReLU";
    p.tree = {15, 16, Activation::ReLU, Geometry::CIFAR};
    p.hp = {cfg.eta, cfg.mu, cfg.alpha, cfg.batch};
    p.schedule = piecewise({{0, 1, cfg.eta}});
    p.epochs = 1;
    p.mode = Mode::Online;
    p.dataset_size = cfg.examples;
    p.pruned_bp = true;
    plans.push_back(p);
  }

  {
    TrainPlan p;
    p.name = "tree3-cifar-desk";
    p.note = "desk-scale smoke run: K=6 M=16 ReLU, 12.5k subset, 10 epochs";
    p.tree = {6, 16, Activation::ReLU, Geometry::CIFAR};
    p.hp = {0.05, 0.965, 5e-5, 50};
    p.schedule = geometric(0.05, 0.6, 2);
    p.epochs = 10;
    p.dataset_size = 12500;
    p.pruned_bp = true;
    plans.push_back(p);
  }

  for (auto& p : plans) p.validate();
  return plans;
}

}  // namespace

std::string TrainPlan::to_json_string(int indent) const {
  return plan_to_json(*this).dump(indent);
}

TrainPlan TrainPlan::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("plan json: ") + e.what());
  }
  return plan_from_json(j);
}

TrainPlan TrainPlan::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("plan file not readable: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

void TrainPlan::save_file(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("plan file not writable: " + path.string());
  out << to_json_string() << "\n";
}

const std::vector<TrainPlan>& builtin_plans() {
  static const std::vector<TrainPlan> plans = make_builtin_plans();
  return plans;
}

const TrainPlan& find_plan(const std::string& name) {
  for (const auto& p : builtin_plans()) {
    if (p.name == name) return p;
  }
  std::string names;
  for (const auto& p : builtin_plans()) {
    if (!names.empty()) names += ", ";
    names += p.name;
  }
  throw ConfigError("unknown plan '" + name + "'; valid names: " + names);
}

std::string describe_plan(const TrainPlan& plan) {
  std::ostringstream os;
  os << plan.name << ": " << arch_name(plan.arch);
  if (plan.arch == Arch::LeNet5) {
    os << " " << plan.lenet.c1 << "/" << plan.lenet.c2 << "/" << plan.lenet.f1 << "/"
       << plan.lenet.f2 << " " << activation_name(plan.lenet.activation);
  } else {
    os << " K=" << plan.tree.k << " M=" << plan.tree.m << " "
       << geometry_name(plan.tree.geometry) << " "
       << activation_name(plan.tree.activation);
  }
  os << " | eta=" << plan.hp.eta << " mu=" << plan.hp.mu << " alpha=" << plan.hp.alpha
     << " batch=" << plan.hp.batch << " | " << plan.epochs << " epochs "
     << mode_name(plan.mode);
  if (plan.dataset_size) os << " on " << plan.dataset_size << " examples";
  os << " | ";
  if (plan.schedule.kind == Schedule::Kind::Piecewise) {
    os << "eta schedule";
    for (const auto& s : plan.schedule.segments) {
      os << " [" << s.begin << "," << s.end << ")=" << s.eta;
    }
  } else {
    os << "eta " << plan.schedule.eta0 << " x" << plan.schedule.factor << " every "
       << plan.schedule.period << " epochs";
  }
  if (plan.schedule.decay_switch) {
    os << ", alpha->" << plan.schedule.decay_switch->alpha << " from epoch "
       << plan.schedule.decay_switch->epoch;
  }
  if (plan.augment.max_shift || plan.augment.hflip) {
    os << " | augment shift" << plan.augment.max_shift
       << (plan.augment.hflip ? "+flip" : "");
  }
  if (plan.pruned_bp) os << " | pruned bp";
  return os.str();
}

}  // namespace treebp
