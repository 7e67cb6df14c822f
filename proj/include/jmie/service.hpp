#pragma once

#include <jmie/fitted_model.hpp>
#include <jmie/prediction.hpp>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace jmie {

struct FieldError {
    std::string field;
    std::string message;
};

/// A malformed request; carries one entry per offending field.
class RequestError : public Error {
public:
    explicit RequestError(std::vector<FieldError> errors)
        : Error(summary(errors)), errors_(std::move(errors))
    {
    }

    RequestError(std::string field, std::string message)
        : RequestError(std::vector<FieldError>{{std::move(field), std::move(message)}})
    {
    }

    const std::vector<FieldError>& errors() const { return errors_; }

    json to_json() const
    {
        json arr = json::array();
        for (const auto& e : errors_)
            arr.push_back({{"field", e.field}, {"message", e.message}});
        return {{"errors", arr}};
    }

private:
    static std::string summary(const std::vector<FieldError>& errors)
    {
        std::string s;
        for (const auto& e : errors)
            s += (s.empty() ? "" : "; ") + e.field + ": " + e.message;
        return s;
    }

    std::vector<FieldError> errors_;
};

/// Payload shared by `jmie predict` and POST /models/{id}/predict.
struct PredictRequest {
    std::vector<Measurement> history;
    std::vector<double> covariates;
    double t = 0.0;
    std::vector<double> u_grid;
    std::string scenario = "observed";
    std::optional<double> intermediate_time; // needed by the `observed` keyword
    std::optional<int> draws; // M; defaults to min(service default, stored draws)
    std::uint64_t seed = 1;
    bool resample = false;
};

inline json to_json(const PredictRequest& r)
{
    json h = json::array();
    for (const auto& m : r.history)
        h.push_back({m.time, m.value});
    json j{{"history", h},         {"covariates", r.covariates}, {"t", r.t},
           {"u_grid", r.u_grid},     {"scenario", r.scenario},     {"seed", r.seed},
           {"resample", r.resample}};
    if (r.draws)
        j["M"] = *r.draws;
    if (r.intermediate_time)
        j["intermediate_time"] = *r.intermediate_time;
    return j;
}

/// Checks shape and types of every field against the model's covariates.
inline PredictRequest parse_predict_request(const json& body, const ModelSpec& spec)
{
    std::vector<FieldError> errs;
    PredictRequest r;
    if (!body.is_object())
        throw RequestError("", "request body must be a JSON object");

    const auto number = [&](const json& v, const std::string& field) -> std::optional<double> {
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
            errs.push_back({field, "must be a finite number"});
            return std::nullopt;
        }
        return v.get<double>();
    };

    if (!body.contains("t"))
        errs.push_back({"t", "required"});
    else if (const auto t = number(body["t"], "t")) {
        r.t = *t;
        if (r.t < 0.0)
            errs.push_back({"t", "must be non-negative"});
    }

    if (!body.contains("u_grid"))
        errs.push_back({"u_grid", "required"});
    else if (!body["u_grid"].is_array() || body["u_grid"].empty())
        errs.push_back({"u_grid", "must be a non-empty array of numbers"});
    else {
        for (std::size_t k = 0; k < body["u_grid"].size(); ++k)
            if (const auto u = number(body["u_grid"][k], "u_grid[" + std::to_string(k) + "]"))
                r.u_grid.push_back(*u);
        if (r.u_grid.size() == body["u_grid"].size()) {
            if (!std::ranges::is_sorted(r.u_grid))
                errs.push_back({"u_grid", "must be sorted"});
            else if (r.u_grid.front() < r.t)
                errs.push_back({"u_grid", "values must be >= t"});
        }
    }

    if (body.contains("history")) {
        const auto& h = body["history"];
        if (!h.is_array())
            errs.push_back({"history", "must be an array of [time, value] pairs"});
        else
            for (std::size_t k = 0; k < h.size(); ++k) {
                const std::string f = "history[" + std::to_string(k) + "]";
                const auto& e = h[k];
                std::optional<double> tm, val;
                if (e.is_array() && e.size() == 2) {
                    tm = number(e[0], f + ".time");
                    val = number(e[1], f + ".value");
                } else if (e.is_object() && e.contains("time") && e.contains("value")) {
                    tm = number(e["time"], f + ".time");
                    val = number(e["value"], f + ".value");
                } else {
                    errs.push_back({f, "must be [time, value] or {time, value}"});
                    continue;
                }
                if (tm && val) {
                    if (*tm < 0.0)
                        errs.push_back({f + ".time", "must be non-negative"});
                    else if (!r.history.empty() && *tm < r.history.back().time)
                        errs.push_back({f + ".time", "history must be sorted by time"});
                    r.history.push_back({*tm, *val});
                }
            }
    }

    const auto& names = spec.covariates;
    if (body.contains("covariates")) {
        const auto& c = body["covariates"];
        if (c.is_array()) {
            if (c.size() != names.size())
                errs.push_back({"covariates", "expected " + std::to_string(names.size()) + " values"});
            for (std::size_t k = 0; k < c.size(); ++k)
                if (const auto v = number(c[k], "covariates[" + std::to_string(k) + "]"))
                    r.covariates.push_back(*v);
        } else if (c.is_object()) {
            for (const auto& n : names) {
                if (!c.contains(n))
                    errs.push_back({"covariates." + n, "required"});
                else if (const auto v = number(c[n], "covariates." + n))
                    r.covariates.push_back(*v);
            }
            for (const auto& [k, v] : c.items())
                if (std::ranges::find(names, k) == names.end())
                    errs.push_back({"covariates." + k, "unknown covariate"});
        } else {
            errs.push_back({"covariates", "must be an array or an object keyed by name"});
        }
    } else if (!names.empty()) {
        errs.push_back({"covariates", "required"});
    }

    if (body.contains("scenario")) {
        if (!body["scenario"].is_string())
            errs.push_back({"scenario", "must be one of now, at=<time>, never, observed"});
        else
            r.scenario = body["scenario"].get<std::string>();
    }
    if (body.contains("intermediate_time") && !body["intermediate_time"].is_null())
        if (const auto v = number(body["intermediate_time"], "intermediate_time"))
            r.intermediate_time = *v;

    if (body.contains("M")) {
        if (!body["M"].is_number_integer() || body["M"].get<long long>() < 1 || body["M"].get<long long>() > 1000000)
            errs.push_back({"M", "must be an integer in [1, 1000000]"});
        else
            r.draws = body["M"].get<int>();
    }
    if (body.contains("seed")) {
        const auto& v = body["seed"];
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            errs.push_back({"seed", "must be a non-negative integer"});
        else
            r.seed = body["seed"].get<std::uint64_t>();
    }
    if (body.contains("resample")) {
        if (!body["resample"].is_boolean())
            errs.push_back({"resample", "must be a boolean"});
        else
            r.resample = body["resample"].get<bool>();
    }

    for (const auto& [k, v] : body.items())
        if (!std::set<std::string>{"history", "covariates", "t", "u_grid", "scenario", "intermediate_time", "M",
                                   "seed", "resample"}
                 .contains(k))
            errs.push_back({k, "unknown field"});

    if (errs.empty()) {
        for (std::size_t k = 0; k < r.history.size(); ++k)
            if (r.history[k].time > r.t) {
                errs.push_back({"history[" + std::to_string(k) + "].time", "after t; drop it or raise t"});
                break;
            }
        try {
            parse_scenario(r.scenario, r.t, r.intermediate_time).validate(r.t, r.u_grid.back());
        } catch (const Error& e) {
            errs.push_back({"scenario", e.what()});
        }
    }
    if (!errs.empty())
        throw RequestError(std::move(errs));
    return r;
}

/// The one prediction path behind the CLI and the HTTP service.
inline json predict_response(const FittedJointModel& fitted, const PredictRequest& req, const std::string& model_id,
                             const PredictionOptions& base = {}, int default_draws = 500)
{
    const int M = req.draws.value_or(std::min<int>(default_draws, static_cast<int>(fitted.size())));
    SubjectRecord subject;
    subject.id = "request";
    subject.covariates = req.covariates;
    subject.measurements = req.history;
    subject.intermediate_time = req.intermediate_time;
    const auto scenario = parse_scenario(req.scenario, req.t, req.intermediate_time);
    auto opts = base;
    opts.draws = M;
    opts.seed = req.seed;
    opts.resample = req.resample;
    const auto curve = prediction_curve(fitted, subject, req.t, req.u_grid, scenario, opts);
    json preds = json::array();
    for (const auto& p : curve)
        preds.push_back({{"u", p.u}, {"median", p.median}, {"ci_low", p.ci_low}, {"ci_high", p.ci_high}});
    return {{"model", model_id}, {"t", req.t},       {"scenario", to_string(scenario)},
            {"M", M},            {"seed", req.seed}, {"predictions", preds}};
}

/// Byte form used by both front-ends so their outputs compare equal.
inline std::string serialize_response(const json& j) { return j.dump(2) + "\n"; }

inline json model_summary(const std::string& id, const FittedJointModel& m)
{
    return {{"id", id},
            {"label", m.spec.label},
            {"covariates", m.spec.covariates},
            {"coefficients", beta_labels(m.spec)},
            {"random_effects", random_labels(m.spec)},
            {"association",
             {{"pre", detail::features_to_json(m.spec.association.pre)},
              {"post", detail::features_to_json(m.spec.association.post)}}},
            {"baseline", m.spec.baseline.family == BaselineFamily::weibull ? "weibull" : "bspline"},
            {"window", m.spec.window == LongitudinalWindow::all ? "all" : "pre-intermediate"},
            {"draws", m.size()},
            {"chains", m.config.chains}};
}

/// Immutable set of loaded models, shared by all request threads.
class ModelRegistry {
public:
    void add(const std::string& id, FittedJointModel m)
    {
        if (id.empty() || id.find('/') != std::string::npos)
            throw Error("invalid model id '" + id + "'");
        if (!models_.emplace(id, std::make_shared<const FittedJointModel>(std::move(m))).second)
            throw Error("duplicate model id '" + id + "'");
    }

    std::shared_ptr<const FittedJointModel> find(const std::string& id) const
    {
        const auto it = models_.find(id);
        return it == models_.end() ? nullptr : it->second;
    }

    json list() const
    {
        json arr = json::array();
        for (const auto& [id, m] : models_)
            arr.push_back(model_summary(id, *m));
        return {{"models", arr}};
    }

    bool empty() const { return models_.empty(); }

private:
    std::map<std::string, std::shared_ptr<const FittedJointModel>> models_;
};

struct ServiceOptions {
    int default_draws = 500;
    PredictionOptions prediction;
};

/// Routes: GET /models and POST /models/{id}/predict.
inline void install_routes(httplib::Server& server, const ModelRegistry& registry, ServiceOptions opts = {})
{
    const auto send = [](httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(serialize_response(body), "application/json");
    };
    server.Get("/models", [&registry, send](const httplib::Request&, httplib::Response& res) {
        send(res, 200, registry.list());
    });
    server.Post("/models/:id/predict", [&registry, opts, send](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.path_params.at("id");
        const auto model = registry.find(id);
        if (!model)
            return send(res, 404, {{"error", "unknown model '" + id + "'"}});
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error& e) {
            return send(res, 400, RequestError("", std::string("malformed JSON: ") + e.what()).to_json());
        }
        try {
            const auto pr = parse_predict_request(body, model->spec);
            send(res, 200, predict_response(*model, pr, id, opts.prediction, opts.default_draws));
        } catch (const RequestError& e) {
            send(res, 400, e.to_json());
        } catch (const Error& e) {
            send(res, 422, RequestError("", e.what()).to_json());
        }
    });
    server.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        send(res, 500, {{"error", what}});
    });
}

} // namespace jmie
