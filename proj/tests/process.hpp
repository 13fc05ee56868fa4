#pragma once

// Runs the command-line tool as a child process.

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <string>
#include <vector>

namespace forge::testing {

inline std::string cli_path() { return FORGE_CLI; }

/// Child with stdout and stderr redirected to `log` (appended), or /dev/null when empty.
inline pid_t spawn_cli(const std::vector<std::string>& args, const std::string& log = {}) {
    const pid_t pid = fork();
    if (pid != 0) return pid;
    const int fd = log.empty() ? open("/dev/null", O_WRONLY) : open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd >= 0) {
        dup2(fd, 1);
        dup2(fd, 2);
    }
    const std::string exe = cli_path();
    std::vector<char*> argv{const_cast<char*>(exe.c_str())};
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    execv(exe.c_str(), argv.data());
    _exit(127);
}

/// Exit status, or -signal when the child was killed.
inline int wait_cli(pid_t pid) {
    int status = 0;
    if (waitpid(pid, &status, 0) < 0) return -1000;
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return WIFSIGNALED(status) ? -WTERMSIG(status) : -1000;
}

inline int run_cli(const std::vector<std::string>& args, const std::string& log = {}) {
    return wait_cli(spawn_cli(args, log));
}

}  // namespace forge::testing
