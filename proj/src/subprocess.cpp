#include "subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <mutex>

namespace reticgen::detail {

namespace {

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

}  // namespace

ProcessResult run_process(const std::string& command, std::string_view input, std::chrono::milliseconds timeout) {
  ignore_sigpipe();
  ProcessResult result;
  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) {
    result.error = std::string("pipe: ") + std::strerror(errno);
    return result;
  }
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    result.error = std::string("pipe: ") + std::strerror(errno);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    return result;
  }

  const pid_t pid = ::fork();
  if (pid < 0) {
    result.error = std::string("fork: ") + std::strerror(errno);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    return result;
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  result.launched = true;
  int write_fd = in_pipe[1], read_fd = out_pipe[0];
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);

  // Inputs are one short line, well under the pipe buffer; a child that never
  // reads stdin still cannot block us here.
  std::size_t written = 0;
  while (written < input.size()) {
    const ssize_t n = ::write(write_fd, input.data() + written, input.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      break;  // EPIPE: child closed stdin; keep reading its output
    }
    written += static_cast<std::size_t>(n);
  }
  close_fd(write_fd);

  const auto deadline = std::chrono::steady_clock::now() + timeout;
  char buf[4096];
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      result.timed_out = true;
      break;
    }
    pollfd pfd{read_fd, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      result.error = std::string("poll: ") + std::strerror(errno);
      break;
    }
    if (ready == 0) continue;
    const ssize_t n = ::read(read_fd, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      result.error = std::string("read: ") + std::strerror(errno);
      break;
    }
    if (n == 0) break;  // EOF
    if (result.output.size() < (1u << 20)) result.output.append(buf, static_cast<std::size_t>(n));
  }
  close_fd(read_fd);

  if (result.timed_out || !result.error.empty()) ::kill(-pid, SIGKILL);
  int status = 0;
  for (;;) {
    if (result.timed_out) {
      if (::waitpid(pid, &status, 0) >= 0 || errno != EINTR) break;
      continue;
    }
    // stdout closed; give the child until the deadline to exit.
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      result.timed_out = true;
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      break;
    }
    ::usleep(1000);
  }
  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  return result;
}

}  // namespace reticgen::detail
