#include "robustcast/external.hpp"

#include <algorithm>
#include <charconv>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <map>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

namespace robustcast {

namespace {

using Clock = std::chrono::steady_clock;

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] {
    struct sigaction old {};
    sigaction(SIGPIPE, nullptr, &old);
    if (old.sa_handler == SIG_DFL) {
      struct sigaction sa {};
      sa.sa_handler = SIG_IGN;
      sigemptyset(&sa.sa_mask);
      sigaction(SIGPIPE, &sa, nullptr);
    }
  });
}

void set_nonblocking(int fd) {
  const int flags = fcntl(fd, F_GETFL);
  fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

void append_matrix(std::string& out, const Matrix& x) {
  out += '[';
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (i) out += ',';
    out += '[';
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (j) out += ',';
      append_double(out, x(i, j));
    }
    out += ']';
  }
  out += ']';
}

std::string describe_status(int status) {
  if (WIFEXITED(status)) return "exited with status " + std::to_string(WEXITSTATUS(status));
  if (WIFSIGNALED(status)) return "killed by signal " + std::to_string(WTERMSIG(status));
  return "stopped";
}

}  // namespace

const char* errc_name(ExternalErrc c) {
  switch (c) {
    case ExternalErrc::SpawnFailed: return "spawn-failed";
    case ExternalErrc::ProcessExit: return "process-exit";
    case ExternalErrc::MalformedFrame: return "malformed-frame";
    case ExternalErrc::Timeout: return "timeout";
    case ExternalErrc::IdMismatch: return "id-mismatch";
    case ExternalErrc::ShapeMismatch: return "shape-mismatch";
    case ExternalErrc::RemoteError: return "remote-error";
  }
  return "?";
}

ExternalError::ExternalError(ExternalErrc code, const std::string& what)
    : ModelError(std::string("external model [") + errc_name(code) + "]: " + what), code_(code) {}

std::string hello_frame(const WireShape& s) {
  std::string out = "{\"type\":\"hello\",\"protocol\":1,\"n\":" + std::to_string(s.n) +
                    ",\"horizon\":" + std::to_string(s.horizon) + ",\"channels\":" + std::to_string(s.channels) +
                    ",\"targets\":[";
  for (std::size_t i = 0; i < s.targets.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s.targets[i]);
  }
  out += "]}\n";
  return out;
}

std::string predict_frame(std::uint64_t id, const Matrix& x) {
  if (!x.allFinite()) throw ModelError("external model: input window has non-finite values");
  std::string out = "{\"type\":\"predict\",\"id\":" + std::to_string(id) + ",\"x\":";
  out.reserve(out.size() + static_cast<std::size_t>(x.size()) * 20 + 8);
  append_matrix(out, x);
  out += "}\n";
  return out;
}

std::string shutdown_frame() { return "{\"type\":\"shutdown\"}\n"; }

// ---------------------------------------------------------------------------

ModelProcess::ModelProcess(const ExternalConfig& cfg, WireShape shape) : cfg_(cfg), shape_(std::move(shape)) {
  if (cfg_.command.empty()) throw ConfigError("external model: empty command");
  ignore_sigpipe();
  int in[2], out[2], err[2];
  if (pipe2(in, O_CLOEXEC) != 0) throw ExternalError(ExternalErrc::SpawnFailed, std::strerror(errno));
  if (pipe2(out, O_CLOEXEC) != 0) {
    close(in[0]);
    close(in[1]);
    throw ExternalError(ExternalErrc::SpawnFailed, std::strerror(errno));
  }
  if (pipe2(err, O_CLOEXEC) != 0) {
    for (int fd : {in[0], in[1], out[0], out[1]}) close(fd);
    throw ExternalError(ExternalErrc::SpawnFailed, std::strerror(errno));
  }
  std::vector<char*> argv;
  for (auto& a : cfg_.command) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  pid_ = fork();
  if (pid_ < 0) {
    for (int fd : {in[0], in[1], out[0], out[1], err[0], err[1]}) close(fd);
    throw ExternalError(ExternalErrc::SpawnFailed, std::strerror(errno));
  }
  if (pid_ == 0) {
    dup2(in[0], STDIN_FILENO);
    dup2(out[1], STDOUT_FILENO);
    execvp(argv[0], argv.data());
    const int e = errno;
    [[maybe_unused]] auto n = write(err[1], &e, sizeof e);
    _exit(127);
  }
  close(in[0]);
  close(out[1]);
  close(err[1]);
  to_child_ = in[1];
  from_child_ = out[0];

  int exec_errno = 0;
  ssize_t got;
  do {
    got = read(err[0], &exec_errno, sizeof exec_errno);
  } while (got < 0 && errno == EINTR);
  close(err[0]);
  if (got > 0) {
    waitpid(pid_, nullptr, 0);
    pid_ = -1;
    close(to_child_);
    close(from_child_);
    to_child_ = from_child_ = -1;
    throw ExternalError(ExternalErrc::SpawnFailed,
                        "cannot execute '" + cfg_.command[0] + "': " + std::strerror(exec_errno));
  }
  set_nonblocking(to_child_);
  set_nonblocking(from_child_);
  try {
    handshake();
  } catch (...) {
    kill_child();
    throw;
  }
}

ModelProcess::~ModelProcess() {
  try {
    shutdown();
  } catch (...) {
  }
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
}

void ModelProcess::kill_child() {
  if (pid_ > 0) {
    kill(pid_, SIGKILL);
    waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }
}

void ModelProcess::fail(ExternalErrc code, const std::string& what) {
  broken_ = true;
  std::string msg = what;
  if (code == ExternalErrc::ProcessExit && pid_ > 0) {
    // Give the child a moment to be reaped so the status can be reported.
    int status = 0;
    for (int i = 0; i < 100; ++i) {
      const pid_t r = waitpid(pid_, &status, WNOHANG);
      if (r == pid_) {
        msg += " (" + describe_status(status) + ")";
        pid_ = -1;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  kill_child();
  throw ExternalError(code, msg);
}

void ModelProcess::write_all(const std::string& data, Clock::time_point deadline) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t w = write(to_child_, data.data() + off, data.size() - off);
    if (w > 0) {
      off += static_cast<std::size_t>(w);
      continue;
    }
    if (w < 0 && errno == EINTR) continue;
    if (w < 0 && errno == EPIPE) fail(ExternalErrc::ProcessExit, "model process closed its input");
    if (w < 0 && errno != EAGAIN) fail(ExternalErrc::ProcessExit, std::strerror(errno));
    pollfd p{to_child_, POLLOUT, 0};
    const int left = remaining_ms(deadline);
    if (left == 0 || poll(&p, 1, left) == 0) fail(ExternalErrc::Timeout, "no progress writing to model process");
  }
}

bool ModelProcess::read_line(std::string& line, Clock::time_point deadline) {
  for (;;) {
    const auto nl = inbox_.find('\n');
    if (nl != std::string::npos) {
      line.assign(inbox_, 0, nl);
      inbox_.erase(0, nl + 1);
      return true;
    }
    pollfd p{from_child_, POLLIN, 0};
    const int left = remaining_ms(deadline);
    if (left == 0) return false;
    const int rc = poll(&p, 1, left);
    if (rc < 0 && errno == EINTR) continue;
    if (rc == 0) return false;
    char buf[65536];
    const ssize_t r = read(from_child_, buf, sizeof buf);
    if (r > 0) {
      inbox_.append(buf, static_cast<std::size_t>(r));
    } else if (r == 0) {
      fail(ExternalErrc::ProcessExit, "model process closed its output");
    } else if (errno != EAGAIN && errno != EINTR) {
      fail(ExternalErrc::ProcessExit, std::strerror(errno));
    }
  }
}

void ModelProcess::handshake() {
  const auto deadline = Clock::now() + cfg_.timeout;
  write_all(hello_frame(shape_), deadline);
  std::string line;
  if (!read_line(line, deadline)) fail(ExternalErrc::Timeout, "no reply to hello");
  const auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j["type"].is_string())
    fail(ExternalErrc::MalformedFrame, "bad reply to hello: " + line.substr(0, 200));
  const auto type = j["type"].get<std::string>();
  if (type == "error") fail(ExternalErrc::RemoteError, j.value("msg", std::string("(no message)")));
  if (type != "ready") fail(ExternalErrc::MalformedFrame, "expected a ready frame, got '" + type + "'");
}

std::vector<Matrix> ModelProcess::predict(std::span<const Matrix> xs) {
  if (!alive()) throw ExternalError(ExternalErrc::ProcessExit, "model process is not running");
  const auto deadline = Clock::now() + cfg_.timeout;
  const std::size_t total = xs.size();
  std::vector<Matrix> out(total);
  std::map<std::uint64_t, std::size_t> pending;  // id -> input position
  const std::uint64_t first_id = next_id_;
  next_id_ += total;

  std::string outbuf;
  std::size_t off = 0;
  std::size_t sent = 0;
  std::size_t received = 0;
  const auto rows = static_cast<Eigen::Index>(shape_.horizon);
  const auto cols = static_cast<Eigen::Index>(shape_.targets.size());

  auto handle = [&](const std::string& line) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j["type"].is_string())
      fail(ExternalErrc::MalformedFrame, "unparseable frame: " + line.substr(0, 200));
    const auto type = j["type"].get<std::string>();
    if (type == "error") fail(ExternalErrc::RemoteError, j.value("msg", std::string("(no message)")));
    if (type != "prediction") fail(ExternalErrc::MalformedFrame, "unexpected frame type '" + type + "'");
    if (!j.contains("id") || !j["id"].is_number_integer() || !j.contains("y"))
      fail(ExternalErrc::MalformedFrame, "prediction frame without integer id or y");
    const auto id = j["id"].get<std::int64_t>();
    const auto it = id < 0 ? pending.end() : pending.find(static_cast<std::uint64_t>(id));
    if (it == pending.end())
      fail(ExternalErrc::IdMismatch, "response id " + std::to_string(id) + " matches no outstanding request");
    const auto& y = j["y"];
    if (!y.is_array() || y.size() != static_cast<std::size_t>(rows))
      fail(ExternalErrc::ShapeMismatch, "response " + std::to_string(id) + ": expected " + std::to_string(rows) +
                                            " rows, got " + (y.is_array() ? std::to_string(y.size()) : "no array"));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto& row = y[static_cast<std::size_t>(i)];
      if (!row.is_array() || row.size() != static_cast<std::size_t>(cols))
        fail(ExternalErrc::ShapeMismatch, "response " + std::to_string(id) + ": row " + std::to_string(i) +
                                              " does not have " + std::to_string(cols) + " values");
      for (Eigen::Index c = 0; c < cols; ++c) {
        const auto& v = row[static_cast<std::size_t>(c)];
        if (!v.is_number()) fail(ExternalErrc::MalformedFrame, "non-numeric prediction value");
        m(i, c) = v.get<double>();
      }
    }
    out[it->second] = std::move(m);
    pending.erase(it);
    ++received;
  };

  while (received < total) {
    while (sent < total && pending.size() < std::max<std::size_t>(1, cfg_.max_in_flight)) {
      const std::uint64_t id = first_id + sent;
      outbuf += predict_frame(id, xs[sent]);
      pending.emplace(id, sent);
      ++sent;
    }
    // Drain complete lines already buffered.
    for (auto nl = inbox_.find('\n'); nl != std::string::npos; nl = inbox_.find('\n')) {
      const std::string line = inbox_.substr(0, nl);
      inbox_.erase(0, nl + 1);
      if (!line.empty()) handle(line);
    }
    if (received == total) break;

    pollfd fds[2] = {{from_child_, POLLIN, 0}, {to_child_, static_cast<short>(off < outbuf.size() ? POLLOUT : 0), 0}};
    const int left = remaining_ms(deadline);
    if (left == 0)
      fail(ExternalErrc::Timeout, std::to_string(total - received) + " of " + std::to_string(total) +
                                      " predictions outstanding after " + std::to_string(cfg_.timeout.count()) + " ms");
    const int rc = poll(fds, off < outbuf.size() ? 2 : 1, left);
    if (rc < 0) {
      if (errno == EINTR) continue;
      fail(ExternalErrc::ProcessExit, std::strerror(errno));
    }
    if (rc == 0) continue;
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      char buf[65536];
      const ssize_t r = read(from_child_, buf, sizeof buf);
      if (r > 0)
        inbox_.append(buf, static_cast<std::size_t>(r));
      else if (r == 0)
        fail(ExternalErrc::ProcessExit, "model process closed its output with " +
                                            std::to_string(total - received) + " predictions outstanding");
      else if (errno != EAGAIN && errno != EINTR)
        fail(ExternalErrc::ProcessExit, std::strerror(errno));
    }
    if (off < outbuf.size() && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t w = write(to_child_, outbuf.data() + off, outbuf.size() - off);
      if (w > 0) {
        off += static_cast<std::size_t>(w);
        if (off == outbuf.size()) {
          outbuf.clear();
          off = 0;
        }
      } else if (w < 0 && errno == EPIPE) {
        fail(ExternalErrc::ProcessExit, "model process closed its input");
      } else if (w < 0 && errno != EAGAIN && errno != EINTR) {
        fail(ExternalErrc::ProcessExit, std::strerror(errno));
      }
    }
  }
  return out;
}

int ModelProcess::shutdown() {
  if (pid_ <= 0) return -1;
  if (!broken_) {
    try {
      write_all(shutdown_frame(), Clock::now() + std::chrono::seconds(5));
    } catch (const ExternalError&) {
      return -1;
    }
  }
  if (to_child_ >= 0) {
    close(to_child_);
    to_child_ = -1;
  }
  int status = 0;
  for (int i = 0; i < 500; ++i) {
    const pid_t r = waitpid(pid_, &status, WNOHANG);
    if (r == pid_) {
      pid_ = -1;
      return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  kill_child();
  return -1;
}

// ---------------------------------------------------------------------------

ExternalForecaster::ExternalForecaster(ExternalConfig cfg, WireShape shape)
    : cfg_(std::move(cfg)), shape_(std::move(shape)) {
  if (cfg_.workers == 0) throw ConfigError("adapter_workers must be at least 1");
  for (std::size_t i = 0; i < cfg_.workers; ++i) idle_.push_back(std::make_unique<ModelProcess>(cfg_, shape_));
}

ExternalForecaster::~ExternalForecaster() {
  std::lock_guard<std::mutex> lock(mu_);
  idle_.clear();
}

Matrix ExternalForecaster::predict(const Matrix& x) const {
  return std::move(predict_batch(std::span<const Matrix>(&x, 1)).front());
}

std::vector<Matrix> ExternalForecaster::predict_batch(std::span<const Matrix> xs) const {
  if (xs.empty()) return {};
  for (const auto& x : xs)
    if (x.rows() != static_cast<Eigen::Index>(shape_.n) || x.cols() != static_cast<Eigen::Index>(shape_.channels))
      throw ModelError("external model: input window is " + std::to_string(x.rows()) + "x" +
                       std::to_string(x.cols()) + ", negotiated " + std::to_string(shape_.n) + "x" +
                       std::to_string(shape_.channels));
  std::unique_ptr<ModelProcess> proc;
  {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return !idle_.empty(); });
    proc = std::move(idle_.back());
    idle_.pop_back();
  }
  // A broken process is replaced so that the pool keeps its size.
  auto give_back = [&] {
    // If the replacement cannot start, the dead process goes back instead
    // and later calls fail fast rather than waiting on an empty pool.
    std::unique_ptr<ModelProcess> p = std::move(proc);
    if (!p->alive()) {
      try {
        p = std::make_unique<ModelProcess>(cfg_, shape_);
      } catch (...) {
      }
    }
    std::lock_guard<std::mutex> lock(mu_);
    idle_.push_back(std::move(p));
    cv_.notify_one();
  };
  try {
    auto out = proc->predict(xs);
    give_back();
    return out;
  } catch (...) {
    give_back();
    throw;
  }
}

}  // namespace robustcast
