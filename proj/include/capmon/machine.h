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

// Simulated machine: physical memory, cores, devices, IPIs and the
// two-barrier commit. Every memory access made on behalf of a domain goes
// through Machine::Access and is checked against the view cached on its core.
//
// Two modes. In step mode everything runs on the calling thread and the
// barriers are trivial. In concurrent mode each core may be driven by its own
// thread (see CoreScope); an operation's initiator interrupts the affected
// cores, waits until they park, publishes, then releases them.

#ifndef CAPMON_MACHINE_H_
#define CAPMON_MACHINE_H_

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capmon/attestation.h"
#include "capmon/base.h"
#include "capmon/engine.h"
#include "capmon/platform.h"

namespace capmon {

struct DeviceConfig {
  std::string name;
  PhysRange mmio;
  int vector = 0;
  std::optional<PhysRange> dma;  // defaults to all of td0's memory
};

struct MachineConfig {
  uint64_t memory = 0;
  uint32_t cores = 1;
  PhysRange monitor_reserved;
  std::vector<DeviceConfig> devices;
  uint64_t seed = 0;
  uint32_t max_domains = 1024;
  uint64_t quantum = 0;

  // Line-oriented text: "key value" pairs and
  // "device NAME mmio_start=A mmio_end=B vector=V [dma_start=C dma_end=D]".
  static Result<MachineConfig> Parse(std::string_view text);
  Status Validate() const;
  // Canonical text, also the boot-info measured at boot.
  std::string ToText() const;
  PhysRange RootRange() const;
};

enum class AccessKind : uint8_t { kRead = 1, kWrite = 2, kExecute = 4 };
char AccessKindChar(AccessKind kind);

enum class Mode { kStep, kConcurrent };

struct AccessRecord {
  uint64_t step = 0;
  CoreId core = 0;
  DomainId domain;
  uint64_t address = 0;
  AccessKind kind = AccessKind::kRead;
  bool allowed = false;
  uint64_t version_before = 0;
  uint64_t version_after = 0;

  std::string ToString() const;
};

struct UpdateRecord {
  uint64_t step = 0;
  CoreId core = 0;
  std::string event;  // "park", "release", or an applied Update

  std::string ToString() const;
};

class Machine : public Platform {
 public:
  enum class RunState { kIdle, kRunning, kParked };

  Machine(const MachineConfig& config, Mode mode);
  ~Machine() override;

  void Attach(Engine* engine);
  Mode mode() const { return mode_; }
  const MachineConfig& config() const { return config_; }

  // Platform.
  void ZeroRange(const PhysRange& range) override;
  Digest HashRange(const PhysRange& range) override;
  bool InMemoryBounds(const PhysRange& range) const override;
  void Commit(std::vector<CoreCommit> commits,
              const std::function<void()>& publish) override;
  void LockEngine() override;
  void UnlockEngine() override;

  // Checked access by whatever runs on `core`. Denials are recorded.
  bool Access(CoreId core, uint64_t address, AccessKind kind);
  // Byte-range helpers built on Access. On the first denied byte nothing
  // further is touched; when `fault` is set the fault vector is routed.
  Status Write(CoreId core, uint64_t address, std::span<const uint8_t> data,
               bool fault = true);
  Result<std::vector<uint8_t>> Read(CoreId core, uint64_t address,
                                    uint64_t length, bool fault = true);
  // DMA by a device domain, checked against that domain's view.
  bool DeviceAccess(std::string_view device, uint64_t address,
                    AccessKind kind);

  // Unchecked monitor-side access for tests and the scenario runner.
  uint8_t PeekByte(uint64_t address) const { return memory_[address]; }
  void PokeByte(uint64_t address, uint8_t value) { memory_[address] = value; }

  // Device interrupts and stepping (step mode).
  Status RaiseDeviceInterrupt(std::string_view device, uint64_t at_step);
  // Routes on the lowest core whose eventual handler may run there.
  Result<DomainId> DeliverDeviceInterrupt(std::string_view device);
  void Step(uint64_t n);
  uint64_t step() const { return step_.load(); }

  RunState run_state(CoreId core) const;
  const EffectiveView& cached_view(CoreId core) const;
  DomainId cached_domain(CoreId core) const;

  std::vector<AccessRecord> access_log() const;
  std::vector<UpdateRecord> update_log() const;
  void clear_logs();
  void set_record_accesses(bool on) { record_accesses_ = on; }

  // Called between the barriers after every publish, with the engine locked.
  void set_publish_observer(std::function<void()> observer) {
    publish_observer_ = std::move(observer);
  }

  // Concurrent mode: binds the current thread to `core` for its lifetime.
  // The core counts as running and must answer IPIs, which it does at every
  // Access and while waiting for the engine lock, or via Poll().
  class CoreScope {
   public:
    CoreScope(Machine& machine, CoreId core);
    ~CoreScope();
    CoreScope(const CoreScope&) = delete;
    CoreScope& operator=(const CoreScope&) = delete;

   private:
    Machine& machine_;
    CoreId core_;
  };
  // Answers a pending IPI on the calling thread's core, if any.
  void Poll();

 private:
  struct SimCore {
    CoreId id = 0;
    RunState state = RunState::kIdle;
    bool thread_bound = false;
    std::atomic<bool> ipi{false};
    std::deque<CoreCommit> updates;
    DomainId domain;
    EffectiveView view;
    uint64_t steps = 0;
    std::vector<AccessRecord> accesses;
  };

  void ApplyCommit(SimCore& core, const CoreCommit& commit);
  void ParkAndWait(SimCore& core);
  void RecordUpdate(CoreId core, std::string event);
  void RefreshAll();
  static thread_local int current_core_;

  MachineConfig config_;
  Mode mode_;
  Engine* engine_ = nullptr;
  std::vector<uint8_t> memory_;
  std::vector<std::unique_ptr<SimCore>> cores_;
  std::atomic<uint64_t> step_{0};
  std::atomic<uint64_t> version_{0};
  bool record_accesses_ = true;
  std::function<void()> publish_observer_;

  std::mutex engine_mu_;

  // Barrier state, guarded by mu_.
  mutable std::mutex mu_;
  std::condition_variable cv_;
  uint64_t epoch_ = 0;          // bumped when parked cores are released
  int parked_ = 0;
  int acks_ = 0;
  std::vector<UpdateRecord> update_log_;
  std::multimap<uint64_t, std::string> scheduled_irqs_;
};

// A booted system: machine, engine, boot measurement and attestation key.
struct System {
  MachineConfig config;
  std::unique_ptr<Machine> machine;
  std::unique_ptr<Engine> engine;
  BootMeasurement measurement;
  std::unique_ptr<SigningKey> key;

  DomainId td0() const { return engine->td0(); }
  // Device domain by name.
  std::optional<DomainId> Device(std::string_view name) const;
};

// Attestation key derived from the configured seed.
SigningKey DeriveKey(uint64_t seed);

Result<System> Boot(const MachineConfig& config, Mode mode = Mode::kStep);

}  // namespace capmon

#endif  // CAPMON_MACHINE_H_
