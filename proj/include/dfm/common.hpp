#pragma once

#include <Eigen/Core>
#include <charconv>
#include <stdexcept>
#include <string>
#include <system_error>

namespace dfm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Thrown when an operation is evaluated at a point where it is singular
/// (e.g. the score at t=1, where sigma vanishes).
struct singularity_error : std::domain_error {
    using std::domain_error::domain_error;
};

/// Configuration / usage problems: bad config files, invalid flag values.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem-level failures (missing file, short read/write).
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Structurally broken data files (bad magic, truncated payload, malformed
/// rows). Distinct from io_error so callers can tell "file unreadable" from
/// "file is not what it claims to be".
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline void require_domain(bool cond, const std::string& msg) {
    if (!cond) throw std::domain_error(msg);
}

/// Shortest decimal form that round-trips the exact double value. Used for
/// every text serialization so emitted files are deterministic and lossless.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& what) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc()) throw format_error(what + ": not a number: '" + s + "'");
    return v;
}

}  // namespace dfm
