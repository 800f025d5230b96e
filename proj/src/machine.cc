// Copyright 2026 The capmon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "capmon/machine.h"

#include <algorithm>
#include <cassert>
#include <sstream>
#include <string>
#include <thread>
#include <utility>

#include "capmon/op_log.h"

namespace capmon {
namespace {

std::vector<std::string_view> Words(std::string_view line) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

Error ConfigError(std::string detail) {
  return MakeError(ErrorCode::kBadConfig, std::move(detail));
}

// `range` minus every range in `holes`, in address order.
std::vector<PhysRange> Subtract(PhysRange range, std::vector<PhysRange> holes) {
  std::sort(holes.begin(), holes.end());
  std::vector<PhysRange> out;
  uint64_t cursor = range.start;
  for (const PhysRange& h : holes) {
    if (h.end <= cursor || h.start >= range.end) continue;
    if (h.start > cursor) out.push_back({cursor, h.start});
    cursor = std::max(cursor, h.end);
  }
  if (cursor < range.end) out.push_back({cursor, range.end});
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration.

Result<MachineConfig> MachineConfig::Parse(std::string_view text) {
  MachineConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (size_t hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    std::vector<std::string_view> w = Words(line);
    if (w.empty()) continue;
    auto where = [&] { return "line " + std::to_string(lineno) + ": "; };
    auto number = [&](std::string_view s) -> Result<uint64_t> {
      auto v = ParseNumber(s);
      if (!v) return ConfigError(where() + "bad number '" + std::string(s) + "'");
      return *v;
    };
    std::string_view key = w[0];
    if (key == "device") {
      if (w.size() < 2) return ConfigError(where() + "device needs a name");
      DeviceConfig dev;
      dev.name = std::string(w[1]);
      std::optional<uint64_t> mmio_start, mmio_end, dma_start, dma_end, vector;
      for (size_t i = 2; i < w.size(); ++i) {
        size_t eq = w[i].find('=');
        if (eq == std::string_view::npos) {
          return ConfigError(where() + "expected key=value");
        }
        std::string_view k = w[i].substr(0, eq);
        CAPMON_ASSIGN_OR_RETURN(uint64_t v, number(w[i].substr(eq + 1)));
        if (k == "mmio_start") {
          mmio_start = v;
        } else if (k == "mmio_end") {
          mmio_end = v;
        } else if (k == "vector") {
          vector = v;
        } else if (k == "dma_start") {
          dma_start = v;
        } else if (k == "dma_end") {
          dma_end = v;
        } else {
          return ConfigError(where() + "unknown device key " + std::string(k));
        }
      }
      if (!mmio_start || !mmio_end || !vector) {
        return ConfigError(where() + "device needs mmio_start, mmio_end, vector");
      }
      if (dma_start.has_value() != dma_end.has_value()) {
        return ConfigError(where() + "dma_start and dma_end go together");
      }
      dev.mmio = {*mmio_start, *mmio_end};
      dev.vector = static_cast<int>(*vector);
      if (dma_start) dev.dma = PhysRange{*dma_start, *dma_end};
      config.devices.push_back(std::move(dev));
      continue;
    }
    if (key == "monitor_reserved") {
      if (w.size() != 3) return ConfigError(where() + "monitor_reserved START END");
      CAPMON_ASSIGN_OR_RETURN(uint64_t s, number(w[1]));
      CAPMON_ASSIGN_OR_RETURN(uint64_t e, number(w[2]));
      config.monitor_reserved = {s, e};
      continue;
    }
    if (w.size() != 2) return ConfigError(where() + "expected KEY VALUE");
    CAPMON_ASSIGN_OR_RETURN(uint64_t v, number(w[1]));
    if (key == "memory") {
      config.memory = v;
    } else if (key == "cores") {
      config.cores = static_cast<uint32_t>(v);
    } else if (key == "seed") {
      config.seed = v;
    } else if (key == "max_domains") {
      config.max_domains = static_cast<uint32_t>(v);
    } else if (key == "quantum") {
      config.quantum = v;
    } else {
      return ConfigError(where() + "unknown key " + std::string(key));
    }
  }
  CAPMON_RETURN_IF_ERROR(config.Validate());
  return config;
}

PhysRange MachineConfig::RootRange() const {
  const PhysRange& r = monitor_reserved;
  if (r.start == r.end) return {0, memory};
  if (r.start == 0) return {r.end, memory};
  return {0, r.start};
}

Status MachineConfig::Validate() const {
  if (memory == 0 || memory % kPageSize != 0) {
    return ConfigError("memory must be a non-zero multiple of 4096");
  }
  if (cores < 1 || cores > static_cast<uint32_t>(kMaxCores)) {
    return ConfigError("cores must be in 1..64");
  }
  if (max_domains < 1) return ConfigError("max_domains must be positive");
  const PhysRange& r = monitor_reserved;
  if (r.start != r.end) {
    if (!r.IsValid() || r.end > memory) {
      return ConfigError("monitor_reserved must be page aligned inside memory");
    }
    if (r.start != 0 && r.end != memory) {
      return ConfigError("monitor_reserved must be a prefix or suffix of memory");
    }
    if (r.start == 0 && r.end == memory) {
      return ConfigError("monitor_reserved leaves no memory");
    }
  }
  PhysRange root = RootRange();
  for (size_t i = 0; i < devices.size(); ++i) {
    const DeviceConfig& d = devices[i];
    if (d.name.empty()) return ConfigError("device without name");
    if (!d.mmio.IsValid() || !root.Covers(d.mmio)) {
      return ConfigError("device " + d.name + ": mmio must be page aligned in RAM");
    }
    if (d.vector < 0 || d.vector >= kNumVectors || d.vector == kFaultVector ||
        d.vector == kTimerVector) {
      return ConfigError("device " + d.name + ": bad vector");
    }
    if (d.dma && (!d.dma->IsValid() || !root.Covers(*d.dma))) {
      return ConfigError("device " + d.name + ": dma must be page aligned in RAM");
    }
    for (size_t j = 0; j < devices.size(); ++j) {
      if (j != i && devices[j].name == d.name) {
        return ConfigError("duplicate device " + d.name);
      }
      if (j > i && devices[j].mmio.Overlaps(d.mmio)) {
        return ConfigError("device mmio ranges overlap");
      }
      if (d.dma && devices[j].mmio.Overlaps(*d.dma)) {
        return ConfigError("device " + d.name + ": dma overlaps an mmio range");
      }
    }
  }
  return OkStatus();
}

std::string MachineConfig::ToText() const {
  std::ostringstream out;
  out << "memory " << Hex(memory) << "\n";
  out << "cores " << cores << "\n";
  out << "monitor_reserved " << Hex(monitor_reserved.start) << " "
      << Hex(monitor_reserved.end) << "\n";
  out << "seed " << seed << "\n";
  out << "max_domains " << max_domains << "\n";
  out << "quantum " << quantum << "\n";
  for (const DeviceConfig& d : devices) {
    out << "device " << d.name << " mmio_start=" << Hex(d.mmio.start)
        << " mmio_end=" << Hex(d.mmio.end) << " vector=" << d.vector;
    if (d.dma) {
      out << " dma_start=" << Hex(d.dma->start) << " dma_end=" << Hex(d.dma->end);
    }
    out << "\n";
  }
  return out.str();
}

char AccessKindChar(AccessKind kind) {
  switch (kind) {
    case AccessKind::kRead:
      return 'R';
    case AccessKind::kWrite:
      return 'W';
    case AccessKind::kExecute:
      return 'X';
  }
  return '?';
}

std::string AccessRecord::ToString() const {
  return std::to_string(step) + " " + std::to_string(core) + " " +
         DomainName(domain) + " " + AccessKindChar(kind) + " " + Hex(address) +
         (allowed ? " allow" : " deny");
}

std::string UpdateRecord::ToString() const {
  return std::to_string(step) + " " + std::to_string(core) + " " + event;
}

// ---------------------------------------------------------------------------
// Machine.

thread_local int Machine::current_core_ = -1;

Machine::Machine(const MachineConfig& config, Mode mode)
    : config_(config), mode_(mode), memory_(config.memory, 0) {
  for (CoreId c = 0; c < config.cores; ++c) {
    auto core = std::make_unique<SimCore>();
    core->id = c;
    cores_.push_back(std::move(core));
  }
}

Machine::~Machine() = default;

void Machine::Attach(Engine* engine) {
  engine_ = engine;
  RefreshAll();
}

void Machine::RefreshAll() {
  for (auto& core : cores_) {
    core->domain = engine_->core(core->id).current;
    core->view = engine_->DomainView(core->domain);
    core->state = RunState::kRunning;
  }
  version_ = engine_->version();
}

void Machine::ZeroRange(const PhysRange& range) {
  std::fill(memory_.begin() + range.start, memory_.begin() + range.end, 0);
}

Digest Machine::HashRange(const PhysRange& range) {
  return Sha256(std::span<const uint8_t>(memory_.data() + range.start,
                                         range.size()));
}

bool Machine::InMemoryBounds(const PhysRange& range) const {
  return range.start < range.end && range.end <= memory_.size();
}

void Machine::RecordUpdate(CoreId core, std::string event) {
  update_log_.push_back({step_.load(), core, std::move(event)});
}

void Machine::ApplyCommit(SimCore& core, const CoreCommit& commit) {
  for (const Update& u : commit.updates) RecordUpdate(core.id, u.ToString());
  core.domain = commit.current;
  core.view = commit.view;
  core.state = RunState::kRunning;
  RecordUpdate(core.id, "release");
}

void Machine::LockEngine() {
  if (mode_ == Mode::kStep) {
    engine_mu_.lock();
    return;
  }
  while (!engine_mu_.try_lock()) {
    Poll();
    std::this_thread::yield();
  }
}

void Machine::UnlockEngine() { engine_mu_.unlock(); }

void Machine::Commit(std::vector<CoreCommit> commits,
                     const std::function<void()>& publish) {
  auto finish_publish = [&] {
    publish();
    version_ = engine_->version();
    if (publish_observer_) publish_observer_();
  };

  if (mode_ == Mode::kStep) {
    for (const CoreCommit& c : commits) {
      cores_[c.core]->state = RunState::kParked;
      RecordUpdate(c.core, "park");
    }
    finish_publish();
    for (const CoreCommit& c : commits) ApplyCommit(*cores_[c.core], c);
    return;
  }

  // Concurrent: interrupt every other core bound to a thread, apply the rest
  // on their behalf.
  std::vector<const CoreCommit*> local;
  int remote = 0;
  {
    std::unique_lock<std::mutex> lock(mu_);
    for (const CoreCommit& c : commits) {
      SimCore& core = *cores_[c.core];
      if (core.thread_bound && static_cast<int>(c.core) != current_core_) {
        core.updates.push_back(c);
        core.ipi = true;
        ++remote;
      } else {
        core.state = RunState::kParked;
        RecordUpdate(c.core, "park");
        local.push_back(&c);
      }
    }
    cv_.wait(lock, [&] { return parked_ == remote; });
    // Barrier 1 passed: every affected core is parked.
    finish_publish();
    for (const CoreCommit* c : local) ApplyCommit(*cores_[c->core], *c);
    parked_ = 0;
    acks_ = 0;
    ++epoch_;
    cv_.notify_all();
    // Barrier 2: wait until released cores have consumed their updates.
    cv_.wait(lock, [&] { return acks_ == remote; });
  }
}

void Machine::ParkAndWait(SimCore& core) {
  std::unique_lock<std::mutex> lock(mu_);
  core.state = RunState::kParked;
  RecordUpdate(core.id, "park");
  uint64_t epoch = epoch_;
  ++parked_;
  cv_.notify_all();
  cv_.wait(lock, [&] { return epoch_ != epoch; });
  while (!core.updates.empty()) {
    ApplyCommit(core, core.updates.front());
    core.updates.pop_front();
  }
  ++acks_;
  cv_.notify_all();
}

void Machine::Poll() {
  if (mode_ != Mode::kConcurrent || current_core_ < 0) return;
  SimCore& core = *cores_[current_core_];
  if (core.ipi.exchange(false)) ParkAndWait(core);
}

Machine::CoreScope::CoreScope(Machine& machine, CoreId core)
    : machine_(machine), core_(core) {
  std::lock_guard<std::mutex> lock(machine_.mu_);
  machine_.cores_[core]->thread_bound = true;
  current_core_ = static_cast<int>(core);
}

Machine::CoreScope::~CoreScope() {
  // Holding the engine lock guarantees no commit is in flight.
  machine_.LockEngine();
  {
    std::lock_guard<std::mutex> lock(machine_.mu_);
    machine_.cores_[core_]->thread_bound = false;
  }
  current_core_ = -1;
  machine_.UnlockEngine();
}

bool Machine::Access(CoreId core, uint64_t address, AccessKind kind) {
  if (static_cast<int>(core) == current_core_) Poll();
  SimCore& c = *cores_.at(core);
  uint64_t before = version_.load();
  bool allowed = false;
  if (c.state != RunState::kParked && address < memory_.size()) {
    const ViewSegment* seg = ViewLookup(c.view, address);
    allowed = seg != nullptr &&
              seg->rights.Allows(static_cast<uint8_t>(kind));
  }
  uint64_t after = version_.load();
  ++c.steps;
  if (record_accesses_) {
    AccessRecord rec{step_.load(), core, c.domain, address, kind, allowed,
                     before, after};
    if (mode_ == Mode::kConcurrent) {
      c.accesses.push_back(rec);
    } else {
      std::lock_guard<std::mutex> lock(mu_);
      c.accesses.push_back(rec);
    }
  }
  return allowed;
}

Status Machine::Write(CoreId core, uint64_t address,
                      std::span<const uint8_t> data, bool fault) {
  if (address + data.size() > memory_.size()) {
    return MakeError(ErrorCode::kOutOfMemoryBounds, Hex(address));
  }
  // Views are page-granular, so one check per touched page suffices.
  for (uint64_t a = address; a < address + data.size();
       a = (a / kPageSize + 1) * kPageSize) {
    if (!Access(core, a, AccessKind::kWrite)) {
      if (fault) (void)engine_->RouteInterrupt(core, kFaultVector);
      return MakeError(ErrorCode::kAccessDenied, "write " + Hex(a));
    }
  }
  std::copy(data.begin(), data.end(), memory_.begin() + address);
  return OkStatus();
}

Result<std::vector<uint8_t>> Machine::Read(CoreId core, uint64_t address,
                                           uint64_t length, bool fault) {
  if (address + length > memory_.size()) {
    return MakeError(ErrorCode::kOutOfMemoryBounds, Hex(address));
  }
  for (uint64_t a = address; a < address + length;
       a = (a / kPageSize + 1) * kPageSize) {
    if (!Access(core, a, AccessKind::kRead)) {
      if (fault) (void)engine_->RouteInterrupt(core, kFaultVector);
      return MakeError(ErrorCode::kAccessDenied, "read " + Hex(a));
    }
  }
  return std::vector<uint8_t>(memory_.begin() + address,
                              memory_.begin() + address + length);
}

bool Machine::DeviceAccess(std::string_view device, uint64_t address,
                           AccessKind kind) {
  Engine::ScopedLock lock(*engine_);
  for (const auto& [id, d] : engine_->domains()) {
    if (!d.is_device || d.device_name != device) continue;
    const ViewSegment* seg = ViewLookup(engine_->DomainView(id), address);
    return seg != nullptr && seg->rights.Allows(static_cast<uint8_t>(kind));
  }
  return false;
}

Status Machine::RaiseDeviceInterrupt(std::string_view device,
                                     uint64_t at_step) {
  bool known = std::any_of(
      config_.devices.begin(), config_.devices.end(),
      [&](const DeviceConfig& d) { return d.name == device; });
  if (!known) return MakeError(ErrorCode::kUnknownDevice, std::string(device));
  std::lock_guard<std::mutex> lock(mu_);
  scheduled_irqs_.emplace(at_step, std::string(device));
  return OkStatus();
}

Result<DomainId> Machine::DeliverDeviceInterrupt(std::string_view device) {
  auto dev = std::find_if(
      config_.devices.begin(), config_.devices.end(),
      [&](const DeviceConfig& d) { return d.name == device; });
  if (dev == config_.devices.end()) {
    return MakeError(ErrorCode::kUnknownDevice, std::string(device));
  }
  const int vector = dev->vector;
  CoreId chosen = 0;
  {
    Engine::ScopedLock lock(*engine_);
    for (CoreId c = 0; c < config_.cores; ++c) {
      const CoreState& cs = engine_->core(c);
      std::vector<DomainId> path = cs.return_chain;
      path.push_back(cs.current);
      DomainId handler = path.front();
      for (auto it = path.rbegin(); it != path.rend(); ++it) {
        const DomainNode* d = engine_->FindDomain(*it);
        if (d->policies.interrupts[vector].visibility ==
            InterruptVisibility::kDeliver) {
          handler = *it;
          break;
        }
      }
      if ((engine_->FindDomain(handler)->policies.cores >> c) & 1) {
        chosen = c;
        break;
      }
    }
  }
  return engine_->RouteInterrupt(chosen, vector);
}

void Machine::Step(uint64_t n) {
  for (uint64_t i = 0; i < n; ++i) {
    uint64_t now = ++step_;
    std::vector<std::string> due;
    {
      std::lock_guard<std::mutex> lock(mu_);
      while (!scheduled_irqs_.empty() && scheduled_irqs_.begin()->first <= now) {
        due.push_back(scheduled_irqs_.begin()->second);
        scheduled_irqs_.erase(scheduled_irqs_.begin());
      }
    }
    for (const std::string& dev : due) (void)DeliverDeviceInterrupt(dev);
    for (CoreId c = 0; c < config_.cores; ++c) {
      engine_->set_trace_context(now, c);
      engine_->Tick(c);
      ++cores_[c]->steps;
    }
  }
}

Machine::RunState Machine::run_state(CoreId core) const {
  return cores_.at(core)->state;
}

const EffectiveView& Machine::cached_view(CoreId core) const {
  return cores_.at(core)->view;
}

DomainId Machine::cached_domain(CoreId core) const {
  return cores_.at(core)->domain;
}

std::vector<AccessRecord> Machine::access_log() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<AccessRecord> out;
  for (const auto& core : cores_) {
    out.insert(out.end(), core->accesses.begin(), core->accesses.end());
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const AccessRecord& a, const AccessRecord& b) {
                     return a.step < b.step;
                   });
  return out;
}

std::vector<UpdateRecord> Machine::update_log() const {
  std::lock_guard<std::mutex> lock(mu_);
  return update_log_;
}

void Machine::clear_logs() {
  std::lock_guard<std::mutex> lock(mu_);
  update_log_.clear();
  for (auto& core : cores_) core->accesses.clear();
}

// ---------------------------------------------------------------------------
// Boot.

std::optional<DomainId> System::Device(std::string_view name) const {
  for (const auto& [id, d] : engine->domains()) {
    if (d.is_device && d.device_name == name) return id;
  }
  return std::nullopt;
}

SigningKey DeriveKey(uint64_t seed) {
  return SigningKey::FromSeed(
      Sha256("capmon attestation key " + std::to_string(seed)));
}

Result<System> Boot(const MachineConfig& config, Mode mode) {
  CAPMON_RETURN_IF_ERROR(config.Validate());
  System sys;
  sys.config = config;
  sys.machine = std::make_unique<Machine>(config, mode);

  EngineConfig ec;
  ec.core_count = config.cores;
  ec.root = config.RootRange();
  ec.max_domains = config.max_domains;
  ec.switch_quantum = config.quantum;
  std::vector<PhysRange> mmio;
  for (const DeviceConfig& d : config.devices) mmio.push_back(d.mmio);
  for (const DeviceConfig& d : config.devices) {
    DeviceSpec spec;
    spec.name = d.name;
    spec.mmio = d.mmio;
    spec.vector = d.vector;
    spec.dma = d.dma ? std::vector<PhysRange>{*d.dma} : Subtract(ec.root, mmio);
    ec.devices.push_back(std::move(spec));
  }
  sys.engine = std::make_unique<Engine>(*sys.machine, std::move(ec));
  sys.machine->Attach(sys.engine.get());
  sys.key = std::make_unique<SigningKey>(DeriveKey(config.seed));
  sys.measurement =
      MeasureBoot(config.ToText(), MonitorIdentity(), sys.key->public_key());
  return sys;
}

}  // namespace capmon
