// Test double for the external-model wire protocol. Answers with the last
// observed value of each target channel; the mode argument injects faults.
//
//   fake_model_server [mode]
//     ok          in-order replies (default)
//     reversed    buffers pending requests and answers them newest first
//     bad-shape   one horizon row short
//     bad-id      answers with id + 1000
//     malformed   answers with a line that is not JSON
//     non-number  puts a string inside y
//     early-exit  exits with status 3 on the first predict frame
//     slow        sleeps 2 s before each reply
//     hello-error answers the hello frame with an error frame
//     silent      never answers the hello frame

#include <poll.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace {

std::string inbox;

// Reads one line from stdin. Returns false on EOF. With wait_ms >= 0, also
// returns false when no complete line arrives in time (sets *timed_out).
bool next_line(std::string& line, int wait_ms = -1, bool* timed_out = nullptr) {
  for (;;) {
    const auto pos = inbox.find('\n');
    if (pos != std::string::npos) {
      line = inbox.substr(0, pos);
      inbox.erase(0, pos + 1);
      return true;
    }
    if (wait_ms >= 0) {
      pollfd p{0, POLLIN, 0};
      if (::poll(&p, 1, wait_ms) == 0) {
        if (timed_out) *timed_out = true;
        return false;
      }
    }
    char buf[65536];
    const ssize_t r = ::read(0, buf, sizeof buf);
    if (r <= 0) return false;
    inbox.append(buf, static_cast<std::size_t>(r));
  }
}

void send(const json& j) {
  const std::string s = j.dump() + "\n";
  std::fwrite(s.data(), 1, s.size(), stdout);
  std::fflush(stdout);
}

json answer(const json& req, std::size_t horizon, const std::vector<std::size_t>& targets) {
  const auto& x = req.at("x");
  const auto& last = x.back();
  json y = json::array();
  for (std::size_t t = 0; t < horizon; ++t) {
    json row = json::array();
    for (auto c : targets) row.push_back(last.at(c));
    y.push_back(row);
  }
  return {{"type", "prediction"}, {"id", req.at("id")}, {"y", y}};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "ok";
  std::string line;
  if (!next_line(line)) return 1;
  const json hello = json::parse(line, nullptr, false);
  if (hello.is_discarded() || hello.value("type", "") != "hello") {
    send({{"type", "error"}, {"msg", "expected hello"}});
    return 1;
  }
  if (mode == "hello-error") {
    send({{"type", "error"}, {"msg", "model weights not found"}});
    return 1;
  }
  if (mode == "silent") {
    std::this_thread::sleep_for(std::chrono::seconds(30));
    return 0;
  }
  const std::size_t horizon = hello.at("horizon").get<std::size_t>();
  const auto targets = hello.at("targets").get<std::vector<std::size_t>>();
  send({{"type", "ready"}});

  std::vector<json> pending;
  for (;;) {
    if (mode == "reversed") {
      // Drain whatever is queued, then answer in reverse order.
      bool timed_out = false;
      const int wait = pending.empty() ? -1 : 20;
      if (next_line(line, wait, &timed_out)) {
        const json req = json::parse(line);
        if (req.at("type") == "shutdown") {
          for (auto it = pending.rbegin(); it != pending.rend(); ++it) send(answer(*it, horizon, targets));
          return 0;
        }
        pending.push_back(req);
        continue;
      }
      if (!timed_out) return 0;
      for (auto it = pending.rbegin(); it != pending.rend(); ++it) send(answer(*it, horizon, targets));
      pending.clear();
      continue;
    }

    if (!next_line(line)) return 0;
    const json req = json::parse(line, nullptr, false);
    if (req.is_discarded()) {
      send({{"type", "error"}, {"msg", "malformed JSON"}});
      return 2;
    }
    const auto type = req.value("type", "");
    if (type == "shutdown") return 0;
    if (type != "predict") {
      send({{"type", "error"}, {"msg", "unknown type"}});
      continue;
    }
    if (mode == "early-exit") return 3;
    if (mode == "slow") std::this_thread::sleep_for(std::chrono::seconds(2));
    json resp = answer(req, horizon, targets);
    if (mode == "bad-shape") resp["y"].erase(resp["y"].size() - 1);
    if (mode == "bad-id") resp["id"] = req.at("id").get<std::int64_t>() + 1000;
    if (mode == "non-number") resp["y"][0][0] = "abc";
    if (mode == "malformed") {
      std::fputs("{\"type\":\"prediction\",\"id\":\n", stdout);
      std::fflush(stdout);
      continue;
    }
    send(resp);
  }
}
