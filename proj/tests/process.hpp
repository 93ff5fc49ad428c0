// SPDX-License-Identifier: Apache-2.0
// Child processes for the command line tests.
#pragma once

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

extern char** environ;

namespace lsm::test {

/// A spawned program with stdout on a pipe and stderr in a temporary file.
class Child {
 public:
  explicit Child(const std::vector<std::string>& args) {
    int fds[2];
    if (pipe2(fds, O_CLOEXEC) != 0) throw std::runtime_error("pipe failed");
    char name[] = "/tmp/lsm-stderr-XXXXXX";
    const int err = mkostemp(name, O_CLOEXEC);
    if (err < 0) throw std::runtime_error("mkostemp failed");
    stderr_path_ = name;

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, err, STDERR_FILENO);
    posix_spawn_file_actions_addclose(&actions, fds[0]);
    std::vector<char*> argv;
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    const int rc = posix_spawn(&pid_, argv[0], &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    close(fds[1]);
    close(err);
    if (rc != 0) {
      close(fds[0]);
      throw std::runtime_error("cannot spawn " + args[0]);
    }
    out_ = fds[0];
  }

  ~Child() {
    if (!status_) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
    close(out_);
    std::remove(stderr_path_.c_str());
  }

  Child(const Child&) = delete;
  Child& operator=(const Child&) = delete;

  /// Next stdout line, or nullopt on EOF or timeout.
  std::optional<std::string> line(std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        auto out = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return out;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0 || eof_) return std::nullopt;
      pollfd p{out_, POLLIN, 0};
      if (poll(&p, 1, static_cast<int>(left.count())) <= 0) continue;
      char chunk[4096];
      const auto n = read(out_, chunk, sizeof chunk);
      if (n <= 0) eof_ = true;
      else buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  /// Exit code after the process ends, or nullopt on timeout.
  std::optional<int> wait(std::chrono::milliseconds timeout = std::chrono::seconds(20)) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (!status_) {
      int status = 0;
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        status_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
        break;
      }
      if (std::chrono::steady_clock::now() > deadline) return std::nullopt;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return status_;
  }

  /// Remaining stdout after the process has ended.
  std::string rest(std::chrono::milliseconds timeout = std::chrono::seconds(20)) {
    std::string out;
    while (auto l = line(timeout)) out += *l + "\n";
    return out + buffer_;
  }

  std::string err() const {
    std::ifstream in(stderr_path_);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  void signal(int sig) { kill(pid_, sig); }

 private:
  pid_t pid_ = -1;
  int out_ = -1;
  std::string stderr_path_;
  std::string buffer_;
  bool eof_ = false;
  std::optional<int> status_;
};

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

inline RunResult run(const std::vector<std::string>& args) {
  Child child(args);
  RunResult r;
  r.out = child.rest();
  const auto code = child.wait();
  if (!code) throw std::runtime_error("process did not exit: " + args[0]);
  r.code = *code;
  r.err = child.err();
  return r;
}

}  // namespace lsm::test
