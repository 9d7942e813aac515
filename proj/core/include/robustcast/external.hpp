#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <sys/types.h>

#include "robustcast/dataset.hpp"
#include "robustcast/error.hpp"
#include "robustcast/forecast.hpp"

namespace robustcast {

struct ExternalConfig {
  std::vector<std::string> command;  // argv; command[0] is looked up on PATH
  std::chrono::milliseconds timeout{60000};  // per batch, and for the handshake
  std::size_t workers = 1;            // processes in the pool (adapter_workers)
  std::size_t max_in_flight = 256;    // predict frames sent ahead of responses
  std::string id = "external";
};

enum class ExternalErrc {
  SpawnFailed,
  ProcessExit,
  MalformedFrame,
  Timeout,
  IdMismatch,
  ShapeMismatch,
  RemoteError,
};

const char* errc_name(ExternalErrc c);

class ExternalError : public ModelError {
 public:
  ExternalError(ExternalErrc code, const std::string& what);
  ExternalErrc code() const noexcept { return code_; }

 private:
  ExternalErrc code_;
};

/// Wire-level shape negotiated in the hello frame.
struct WireShape {
  std::size_t n = 96;
  std::size_t horizon = 96;
  std::size_t channels = 0;
  std::vector<std::size_t> targets;
};

std::string hello_frame(const WireShape& shape);
std::string predict_frame(std::uint64_t id, const Matrix& x);
std::string shutdown_frame();

/// One child process speaking the line-delimited JSON protocol. Not thread
/// safe; ExternalForecaster serializes access.
class ModelProcess {
 public:
  ModelProcess(const ExternalConfig& cfg, WireShape shape);
  ~ModelProcess();
  ModelProcess(const ModelProcess&) = delete;
  ModelProcess& operator=(const ModelProcess&) = delete;

  /// Sends every input and collects the matching responses. Responses may
  /// arrive in any order; they are returned in input order.
  std::vector<Matrix> predict(std::span<const Matrix> xs);

  /// Sends shutdown and waits for exit. Returns the exit status (or -1).
  int shutdown();
  bool alive() const { return pid_ > 0 && !broken_; }

 private:
  [[noreturn]] void fail(ExternalErrc code, const std::string& what);
  void write_all(const std::string& data, std::chrono::steady_clock::time_point deadline);
  bool read_line(std::string& line, std::chrono::steady_clock::time_point deadline);
  void handshake();
  void kill_child();

  ExternalConfig cfg_;
  WireShape shape_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string inbox_;
  std::uint64_t next_id_ = 1;
  bool broken_ = false;
};

/// Forecaster backed by a pool of model processes.
class ExternalForecaster final : public Forecaster {
 public:
  ExternalForecaster(ExternalConfig cfg, WireShape shape);
  ~ExternalForecaster() override;

  Matrix predict(const Matrix& x) const override;
  std::vector<Matrix> predict_batch(std::span<const Matrix> xs) const override;
  std::string id() const override { return cfg_.id; }

 private:
  ExternalConfig cfg_;
  WireShape shape_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  mutable std::vector<std::unique_ptr<ModelProcess>> idle_;
};

}  // namespace robustcast
