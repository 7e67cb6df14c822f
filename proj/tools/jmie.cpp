// jmie: command-line front end for simulation, fitting, prediction,
// evaluation, benchmarking and the prediction service.

#include <jmie/jmie.hpp>
#include <jmie/service.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace jmie;

namespace {

void write_file(const fs::path& path, const std::string& content)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << content))
        throw Error("cannot write " + path.string());
}

void emit(const std::string& path, const std::string& content)
{
    if (path.empty() || path == "-")
        std::cout << content;
    else
        write_file(path, content);
}

json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(path + ": " + e.what());
    }
}

FittedJointModel read_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open " + path);
    return load_fitted_model(in);
}

std::string model_id_of(const std::string& path) { return fs::path(path).stem().string(); }

// ---------------------------------------------------------------------------

struct SimulateArgs {
    int scenario = 1;
    std::string config;
    int n = 300;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    bool no_split = false;
};

void cmd_simulate(const SimulateArgs& a)
{
    auto sc = a.config.empty() ? SimulationScenario::preset(a.scenario) : scenario_from_json(read_json(a.config));
    const auto data = simulate_dataset(sc, a.n, a.seed);
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    const auto save = [&](const Dataset& d, const std::string& name) {
        std::ostringstream s, m;
        save_subjects(d, s);
        save_measurements(d, m);
        write_file(dir / (name + "_subjects.csv"), s.str());
        write_file(dir / (name + "_measurements.csv"), m.str());
    };
    json truth{{"scenario", to_json(sc)},
               {"n", a.n},
               {"seed", a.seed},
               {"beta", {sc.intercept, sc.slope, sc.drop, sc.slope_change}},
               {"beta_labels", beta_labels(sc.truth_spec())},
               {"D_diagonal", {sc.re_sd[0] * sc.re_sd[0], sc.re_sd[1] * sc.re_sd[1], sc.re_sd[2] * sc.re_sd[2],
                               sc.re_sd[3] * sc.re_sd[3]}}};
    if (a.no_split) {
        save(data, "data");
    } else {
        Rng rng = make_rng(a.seed, {0x73706c6974ULL});
        const auto split = train_test_split(data, rng);
        save(split.train, "train");
        save(split.test, "test");
    }
    write_file(dir / "truth.json", truth.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string subjects, measurements;
    std::string spec_file;
    std::string preset = "drop+slope-change";
    std::string association = "value";
    std::string baseline = "weibull";
    bool pre_intermediate = false;
    McmcConfig mcmc;
    std::string priors_file;
    std::string out;
};

ModelSpec spec_for(const FitArgs& a, const Dataset& d)
{
    if (!a.spec_file.empty())
        return model_spec_from_json(read_json(a.spec_file));
    std::string preset = a.preset;
    bool pre = a.pre_intermediate;
    if (preset == "extrapolation") {
        preset = "linear";
        pre = true;
    }
    json doc{{"preset", preset},
             {"covariates", d.covariate_names},
             {"association", a.association},
             {"baseline", a.baseline},
             {"window", pre ? "pre-intermediate" : "all"}};
    auto spec = model_spec_from_json(doc);
    if (a.preset == "extrapolation")
        spec.label = "extrapolation";
    return spec;
}

void cmd_fit(FitArgs a, int threads)
{
    const auto data = load_dataset_files(a.subjects, a.measurements);
    const auto spec = spec_for(a, data);
    Priors priors;
    if (!a.priors_file.empty())
        priors = priors_from_json(read_json(a.priors_file));
    a.mcmc.parallel_chains = threads > 1;
    const auto fitted = fit(data, spec, priors, a.mcmc);
    std::ostringstream s;
    save_fitted_model(fitted, s);
    emit(a.out, s.str());
    for (const auto& w : fitted.diagnostics.warnings)
        std::cerr << "warning: " << w << '\n';
}

// ---------------------------------------------------------------------------

struct PredictArgs {
    std::string model;
    std::string model_id;
    std::string request;
    std::string subjects, measurements, id;
    double t = 0.0;
    std::vector<double> u;
    std::string scenario = "observed";
    std::optional<int> draws;
    std::uint64_t seed = 1;
    bool resample = false;
    std::string out;
};

void cmd_predict(const PredictArgs& a)
{
    const auto fitted = read_model(a.model);
    const auto id = a.model_id.empty() ? model_id_of(a.model) : a.model_id;
    PredictRequest req;
    if (!a.request.empty()) {
        req = parse_predict_request(read_json(a.request), fitted.spec);
    } else {
        if (a.subjects.empty() || a.measurements.empty() || a.id.empty())
            throw Error("predict needs --request or --subjects, --measurements and --id");
        if (a.u.empty())
            throw Error("predict needs --u");
        const auto data = load_dataset_files(a.subjects, a.measurements);
        const auto it = std::ranges::find_if(data.subjects, [&](const SubjectRecord& s) { return s.id == a.id; });
        if (it == data.subjects.end())
            throw Error("no subject '" + a.id + "' in " + a.subjects);
        if (data.covariate_names != fitted.spec.covariates)
            throw Error("dataset covariates do not match the model's");
        json body{{"t", a.t},
                  {"u_grid", a.u},
                  {"covariates", it->covariates},
                  {"scenario", a.scenario},
                  {"seed", a.seed},
                  {"resample", a.resample}};
        json h = json::array();
        for (const auto& m : history_until(*it, a.t))
            h.push_back({m.time, m.value});
        body["history"] = h;
        if (it->intermediate_time)
            body["intermediate_time"] = *it->intermediate_time;
        if (a.draws)
            body["M"] = *a.draws;
        req = parse_predict_request(body, fitted.spec);
    }
    emit(a.out, serialize_response(predict_response(fitted, req, id)));
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string table;
    std::string model, subjects, measurements;
    std::vector<double> anchors;
    double delta_t = 2.0;
    int draws = 200;
    std::uint64_t seed = 1;
    std::string out, csv, tables_out;
};

void cmd_evaluate(const EvaluateArgs& a)
{
    std::vector<RiskPredictionTable> tables;
    if (!a.table.empty()) {
        tables.push_back(risk_table_from_json(read_json(a.table)));
    } else {
        if (a.model.empty() || a.subjects.empty() || a.measurements.empty() || a.anchors.empty())
            throw Error("evaluate needs --table, or --model, --subjects, --measurements and --t");
        const auto fitted = read_model(a.model);
        const auto data = load_dataset_files(a.subjects, a.measurements);
        PredictionOptions po;
        po.draws = a.draws;
        po.seed = a.seed;
        for (double t : a.anchors)
            tables.push_back(build_risk_table(data, t, t + a.delta_t, median_predictor(fitted, po)));
    }
    std::vector<MetricReport> reports;
    json arr = json::array();
    for (const auto& tab : tables) {
        reports.push_back(evaluate(tab));
        arr.push_back(to_json(reports.back()));
        if (!reports.back().auc)
            std::cerr << "warning: " << reports.back().diagnostic << '\n';
    }
    if (!a.tables_out.empty()) {
        json tj = json::array();
        for (const auto& tab : tables)
            tj.push_back(to_json(tab));
        write_file(a.tables_out, tj.dump(2) + "\n");
    }
    if (!a.csv.empty()) {
        std::ostringstream s;
        write_metrics_csv(s, reports);
        write_file(a.csv, s.str());
    }
    emit(a.out, json{{"metrics", arr}}.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

struct BenchmarkArgs {
    BenchmarkConfig cfg;
    std::string config;
    std::string out, summary;
};

void cmd_benchmark(BenchmarkArgs a, int threads)
{
    if (!a.config.empty()) {
        const auto j = read_json(a.config);
        for (const auto& s : j.value("scenarios", json::array()))
            a.cfg.custom.push_back(scenario_from_json(s));
    }
    a.cfg.threads = threads;
    const auto rep = run_benchmark(a.cfg);
    std::ostringstream s;
    write_benchmark_csv(s, rep);
    emit(a.out, s.str());
    if (!a.summary.empty())
        write_file(a.summary, benchmark_summary(rep).dump(2) + "\n");
    for (const auto& f : rep.failures)
        std::cerr << "replication " << f.replication << " (scenario " << f.scenario << ") failed: " << f.message
                  << '\n';
}

// ---------------------------------------------------------------------------

struct ServeArgs {
    std::vector<std::string> models;
    std::string host = "127.0.0.1";
    int port = 8080;
    int draws = 500;
};

httplib::Server* g_server = nullptr;

void cmd_serve(const ServeArgs& a, int threads)
{
    ModelRegistry registry;
    for (const auto& m : a.models) {
        const auto eq = m.find('=');
        const auto id = eq == std::string::npos ? model_id_of(m) : m.substr(0, eq);
        const auto path = eq == std::string::npos ? m : m.substr(eq + 1);
        registry.add(id, read_model(path));
    }
    httplib::Server server;
    server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(std::max(1, threads))); };
    ServiceOptions opts;
    opts.default_draws = a.draws;
    install_routes(server, registry, opts);
    g_server = &server;
    std::signal(SIGINT, [](int) { g_server->stop(); });
    std::signal(SIGTERM, [](int) { g_server->stop(); });
    int port = a.port;
    if (port == 0) {
        port = server.bind_to_any_port(a.host);
        if (port < 0)
            throw Error("cannot bind " + a.host);
    } else if (!server.bind_to_port(a.host, port)) {
        throw Error("cannot bind " + a.host + ":" + std::to_string(port));
    }
    std::cout << "listening on http://" << a.host << ":" << port << std::endl;
    server.listen_after_bind();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Joint longitudinal and survival models with intermediate events"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "Worker threads (chains, replications, requests)")
        ->check(CLI::PositiveNumber);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Simulate a scenario and write train/test files");
    simulate
        ->add_option("--scenario", sim.scenario, "Scenario label")
        ->check(CLI::Validator(
            [](const std::string& v) -> std::string {
                if (v == "1" || v == "2" || v == "3")
                    return {};
                return "invalid scenario '" + v + "'; valid labels are 1, 2, 3";
            },
            "1|2|3"));
    simulate->add_option("--config", sim.config, "Scenario document (overrides --scenario)")->check(CLI::ExistingFile);
    simulate->add_option("--n", sim.n, "Subjects (even)")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", sim.seed, "Random seed");
    simulate->add_option("--out-dir", sim.out_dir, "Output directory");
    simulate->add_flag("--no-split", sim.no_split, "Write one dataset instead of a train/test split");

    FitArgs fa;
    auto* fitc = app.add_subcommand("fit", "Fit a joint model by MCMC");
    fitc->add_option("--subjects", fa.subjects, "Subjects file")->required()->check(CLI::ExistingFile);
    fitc->add_option("--measurements", fa.measurements, "Measurements file")->required()->check(CLI::ExistingFile);
    fitc->add_option("--spec", fa.spec_file, "Model spec document")->check(CLI::ExistingFile);
    fitc->add_option("--preset", fa.preset, "Model preset")
        ->check(CLI::IsMember({"drop+slope-change", "linear", "spline-in-t_plus", "extrapolation"}));
    fitc->add_option("--association", fa.association, "Association keyword, e.g. value+slope");
    fitc->add_option("--baseline", fa.baseline, "weibull or bspline")->check(CLI::IsMember({"weibull", "bspline"}));
    fitc->add_flag("--pre-intermediate", fa.pre_intermediate, "Use only measurements before the intermediate event");
    fitc->add_option("--priors", fa.priors_file, "Priors document")->check(CLI::ExistingFile);
    fitc->add_option("--chains", fa.mcmc.chains, "Chains")->check(CLI::PositiveNumber);
    fitc->add_option("--iterations", fa.mcmc.iterations, "Iterations per chain");
    fitc->add_option("--burn-in", fa.mcmc.burn_in, "Burn-in iterations");
    fitc->add_option("--thin", fa.mcmc.thin, "Thinning");
    fitc->add_option("--seed", fa.mcmc.seed, "Random seed");
    fitc->add_option("--out", fa.out, "Fitted model file (default stdout)");

    PredictArgs pa;
    auto* predict = app.add_subcommand("predict", "Dynamic survival prediction for one subject");
    predict->add_option("--model", pa.model, "Fitted model file")->required()->check(CLI::ExistingFile);
    predict->add_option("--model-id", pa.model_id, "Model id written to the response (default file stem)");
    predict->add_option("--request", pa.request, "Request document, same schema as the service")
        ->check(CLI::ExistingFile);
    predict->add_option("--subjects", pa.subjects, "Subjects file")->check(CLI::ExistingFile);
    predict->add_option("--measurements", pa.measurements, "Measurements file")->check(CLI::ExistingFile);
    predict->add_option("--id", pa.id, "Subject id");
    predict->add_option("--t", pa.t, "Landmark time");
    predict->add_option("--u", pa.u, "Horizon(s)")->delimiter(',');
    predict->add_option("--scenario", pa.scenario, "now | at=<time> | never | observed");
    predict->add_option("--draws", pa.draws, "Monte-Carlo draws M")->check(CLI::PositiveNumber);
    predict->add_option("--seed", pa.seed, "Random seed");
    predict->add_flag("--resample", pa.resample, "Allow M above the stored posterior draws");
    predict->add_option("--out", pa.out, "Output file (default stdout)");

    EvaluateArgs ea;
    auto* evaluate_c = app.add_subcommand("evaluate", "Time-dependent AUC and prediction error");
    evaluate_c->add_option("--table", ea.table, "Risk prediction table document")->check(CLI::ExistingFile);
    evaluate_c->add_option("--model", ea.model, "Fitted model file")->check(CLI::ExistingFile);
    evaluate_c->add_option("--subjects", ea.subjects, "Subjects file")->check(CLI::ExistingFile);
    evaluate_c->add_option("--measurements", ea.measurements, "Measurements file")->check(CLI::ExistingFile);
    evaluate_c->add_option("--t", ea.anchors, "Landmark time(s)")->delimiter(',');
    evaluate_c->add_option("--dt", ea.delta_t, "Window length")->check(CLI::PositiveNumber);
    evaluate_c->add_option("--draws", ea.draws, "Monte-Carlo draws M")->check(CLI::PositiveNumber);
    evaluate_c->add_option("--seed", ea.seed, "Random seed");
    evaluate_c->add_option("--out", ea.out, "Metrics document (default stdout)");
    evaluate_c->add_option("--csv", ea.csv, "Metrics as delimited text");
    evaluate_c->add_option("--tables-out", ea.tables_out, "Write the risk prediction tables");

    BenchmarkArgs ba;
    auto* bench = app.add_subcommand("benchmark", "WT versus extrapolation on simulated data");
    bench->add_option("--scenarios", ba.cfg.scenarios, "Scenario labels")->delimiter(',');
    bench->add_option("--replications", ba.cfg.replications, "Replications per scenario")
        ->check(CLI::PositiveNumber);
    bench->add_option("--n", ba.cfg.n, "Subjects per replication (even)")->check(CLI::PositiveNumber);
    bench->add_option("--anchors", ba.cfg.anchors, "Landmark times")->delimiter(',');
    bench->add_option("--dt", ba.cfg.delta_t, "Window length")->check(CLI::PositiveNumber);
    bench->add_option("--seed", ba.cfg.seed, "Random seed");
    bench->add_option("--chains", ba.cfg.mcmc.chains, "Chains per fit")->check(CLI::PositiveNumber);
    bench->add_option("--iterations", ba.cfg.mcmc.iterations, "Iterations per chain");
    bench->add_option("--burn-in", ba.cfg.mcmc.burn_in, "Burn-in iterations");
    bench->add_option("--draws", ba.cfg.prediction.draws, "Monte-Carlo draws M")->check(CLI::PositiveNumber);
    bench->add_option("--config", ba.config, "Document with custom scenarios")->check(CLI::ExistingFile);
    bench->add_option("--out", ba.out, "Per-replication rows (default stdout)");
    bench->add_option("--summary", ba.summary, "Distribution summary document");

    ServeArgs sa;
    auto* serve = app.add_subcommand("serve", "Serve predictions over HTTP");
    serve->add_option("--model", sa.models, "Fitted model, as path or id=path (repeatable)")->required();
    serve->add_option("--host", sa.host, "Bind address");
    serve->add_option("--port", sa.port, "Port (0 picks a free one)");
    serve->add_option("--draws", sa.draws, "Default M when a request omits it")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate)
            cmd_simulate(sim);
        else if (*fitc)
            cmd_fit(fa, threads);
        else if (*predict)
            cmd_predict(pa);
        else if (*evaluate_c)
            cmd_evaluate(ea);
        else if (*bench)
            cmd_benchmark(ba, threads);
        else if (*serve)
            cmd_serve(sa, threads);
    } catch (const RequestError& e) {
        std::cerr << "error: invalid request\n";
        for (const auto& f : e.errors())
            std::cerr << "  " << (f.field.empty() ? "(body)" : f.field) << ": " << f.message << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
