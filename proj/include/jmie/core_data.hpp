#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace jmie {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public Error {
public:
    using Error::Error;
};

struct Measurement {
    double time = 0.0;
    double value = 0.0;

    friend bool operator==(const Measurement&, const Measurement&) = default;
};

/// One subject: observed event time, event indicator, optional intermediate
/// event time, baseline covariates and the ordered biomarker series.
struct SubjectRecord {
    std::string id;
    double event_time = 0.0;
    int event_indicator = 0;
    std::optional<double> intermediate_time;
    std::vector<double> covariates;
    std::vector<Measurement> measurements;

    friend bool operator==(const SubjectRecord&, const SubjectRecord&) = default;
};

struct Dataset {
    std::vector<SubjectRecord> subjects;
    std::vector<std::string> covariate_names;

    std::size_t size() const { return subjects.size(); }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// R(t) = I(t >= rho); zero when the subject never experiences the event.
inline int intermediate_indicator(double t, std::optional<double> rho)
{
    return (rho && t >= *rho) ? 1 : 0;
}

/// t_+ = max(0, t - rho); zero when rho is absent.
inline double time_since_intermediate(double t, std::optional<double> rho)
{
    return rho ? std::max(0.0, t - *rho) : 0.0;
}

inline void validate_subject(const SubjectRecord& s, std::size_t n_covariates)
{
    const auto fail = [&](const std::string& what) {
        throw DataError("subject '" + s.id + "': " + what);
    };
    if (!(s.event_time >= 0.0) || !std::isfinite(s.event_time))
        fail("event_time must be finite and non-negative");
    if (s.event_indicator != 0 && s.event_indicator != 1)
        fail("event_indicator must be 0 or 1");
    if (s.intermediate_time && (!(*s.intermediate_time > 0.0) || !std::isfinite(*s.intermediate_time)))
        fail("intermediate_time must be positive");
    if (s.covariates.size() != n_covariates)
        fail("expected " + std::to_string(n_covariates) + " covariates, got " +
             std::to_string(s.covariates.size()));
    for (std::size_t j = 0; j < s.measurements.size(); ++j) {
        const auto& m = s.measurements[j];
        if (!(m.time >= 0.0) || !std::isfinite(m.time))
            fail("negative or non-finite measurement time");
        if (!std::isfinite(m.value))
            fail("non-finite measurement value");
        if (m.time > s.event_time)
            fail("measurement time " + std::to_string(m.time) + " exceeds event time " +
                 std::to_string(s.event_time));
        if (j > 0 && m.time < s.measurements[j - 1].time)
            fail("measurement times must be nondecreasing");
    }
}

inline void validate_dataset(const Dataset& d)
{
    std::unordered_set<std::string> seen;
    for (const auto& s : d.subjects) {
        if (!seen.insert(s.id).second)
            throw DataError("duplicate subject id '" + s.id + "'");
        validate_subject(s, d.covariate_names.size());
    }
}

/// Measurements taken at or before `t`.
inline std::vector<Measurement> history_until(const SubjectRecord& s, double t)
{
    std::vector<Measurement> out;
    for (const auto& m : s.measurements)
        if (m.time <= t)
            out.push_back(m);
    return out;
}

/// Copy of `s` with only the measurements strictly before the intermediate event.
inline SubjectRecord drop_post_intermediate(SubjectRecord s)
{
    if (s.intermediate_time) {
        const double rho = *s.intermediate_time;
        std::erase_if(s.measurements, [rho](const Measurement& m) { return m.time >= rho; });
    }
    return s;
}

} // namespace jmie
