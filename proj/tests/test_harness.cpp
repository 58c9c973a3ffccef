#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "obsb/harness.hpp"
#include "obsb/io.hpp"

using namespace obsb;

TEST_CASE("random markov is deterministic and valid") {
    for (const auto& s : {SpaceDescriptor::classical(4), SpaceDescriptor::pcone(2, 2.0),
                          SpaceDescriptor::quantum(2)}) {
        MarkovOperator a = random_markov(s, 99);
        MarkovOperator b = random_markov(s, 99);
        MarkovOperator c = random_markov(s, 100);
        CHECK(a.validated);
        CHECK((a.matrix - b.matrix).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a.matrix - c.matrix).cwiseAbs().maxCoeff() > 0.0);
    }
}

TEST_CASE("random markov mixing collapses toward the barycenter") {
    SpaceDescriptor s = SpaceDescriptor::classical(3);
    MarkovOperator proj = random_markov(s, 5, 1.0);
    CHECK(dobrushin_delta(proj).value <= 1e-12);
    Element phi = barycenter(s);
    CHECK((proj.matrix * phi.coords - phi.coords).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK_THROWS_AS(random_markov(s, 5, 1.5), precondition_error);
}

TEST_CASE("perturb toward lands in the magnitude band") {
    SpaceDescriptor s = SpaceDescriptor::classical(4);
    MarkovOperator T = random_markov(s, 17);
    for (double mag : {0.01, 0.05, 0.2}) {
        MarkovOperator S = perturb_toward(T, mag, 23);
        CHECK(S.validated);
        double nrm = operator_norm(T.matrix - S.matrix, s).value;
        CHECK(nrm >= 0.9 * mag - 1e-12);
        CHECK(nrm <= mag + 1e-12);
        // deterministic in the seed
        MarkovOperator S2 = perturb_toward(T, mag, 23);
        CHECK((S.matrix - S2.matrix).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK_THROWS_AS(perturb_toward(T, 0.0, 1), precondition_error);
}

TEST_CASE("suite recorder flags positive slack") {
    detail::SuiteRecorder rec;
    rec.check("inv.ok", -0.5, "");
    rec.check("inv.ok", -0.1, "");
    rec.check("inv.bad", -1.0, "");
    rec.check("inv.bad", 0.25, "worst witness");
    SuiteResult sr;
    sr.records = rec.take();
    CHECK_FALSE(sr.all_pass());
    CHECK(sr.worst_slack() == doctest::Approx(0.25));
    for (const auto& r : sr.records) {
        if (r.name == "inv.ok") {
            CHECK(r.failures == 0);
            CHECK(r.trials == 2);
        } else {
            CHECK(r.failures == 1);
            CHECK(r.witness == "worst witness");
        }
    }
}

TEST_CASE("property suite passes on the classical space") {
    ExperimentConfig cfg;
    cfg.space = SpaceDescriptor::classical(3);
    cfg.trials = 6;
    cfg.seed = 2024;
    cfg.n_max = 16;
    cfg.horizon = 8;
    SuiteResult res = run_property_suite(cfg);
    REQUIRE_FALSE(res.records.empty());
    for (const auto& r : res.records) {
        INFO(r.name, " witness: ", r.witness);
        CHECK(r.failures == 0);
    }
    CHECK(res.all_pass());
    CHECK(res.worst_slack() <= 0.0);
}

TEST_CASE("property suite passes on a p-cone space") {
    ExperimentConfig cfg;
    cfg.space = SpaceDescriptor::pcone(2, 2.0);
    cfg.trials = 2;
    cfg.seed = 31;
    cfg.delta_budget = 16;
    SuiteResult res = run_property_suite(cfg);
    for (const auto& r : res.records) {
        INFO(r.name, " witness: ", r.witness);
        CHECK(r.failures == 0);
    }
}

TEST_CASE("property suite passes on a quantum space") {
    ExperimentConfig cfg;
    cfg.space = SpaceDescriptor::quantum(2);
    cfg.trials = 2;
    cfg.seed = 47;
    cfg.delta_budget = 16;
    SuiteResult res = run_property_suite(cfg);
    for (const auto& r : res.records) {
        INFO(r.name, " witness: ", r.witness);
        CHECK(r.failures == 0);
    }
}

TEST_CASE("tightness experiment is sound and deterministic") {
    ExperimentConfig cfg;
    cfg.space = SpaceDescriptor::classical(3);
    cfg.trials = 4;
    cfg.seed = 7;
    cfg.perturbation_magnitudes = {0.05, 0.1};
    cfg.horizon = 8;
    TightnessTable t1 = tightness_experiment(cfg);
    REQUIRE_FALSE(t1.rows.empty());
    CHECK(t1.summary.size() == 2);
    for (const auto& row : t1.rows) {
        CHECK(row.max_ratio_all <= 1.0 + 1e-8);
        CHECK(row.ratio_eq9 <= 1.0 + 1e-8);
        CHECK(row.ratio_eq12_inf <= 1.0 + 1e-8);
        CHECK(row.delta_Tm < 1.0);
        CHECK(row.norm_TS >= 0.9 * row.magnitude - 1e-12);
        // the floor ladder limit never loosens the plain stationary bound
        CHECK(row.bound_eq12_inf <= row.bound_eq9 + 1e-9);
    }
    for (const auto& s : t1.summary) {
        CHECK(s.count > 0);
        CHECK(s.median_ratio_eq9 <= 1.0 + 1e-8);
    }
    TightnessTable t2 = tightness_experiment(cfg);
    CHECK(to_json(t1).dump() == to_json(t2).dump());

    ExperimentConfig bad = cfg;
    bad.perturbation_magnitudes = {2.5};
    CHECK_THROWS_AS(tightness_experiment(bad), precondition_error);
}

TEST_CASE("density experiment: forced contraction mixtures") {
    ExperimentConfig cfg;
    cfg.space = SpaceDescriptor::classical(3);
    cfg.trials = 2;
    cfg.seed = 11;
    std::vector<DensityRow> rows = density_experiment(cfg, {0.5, 1.0});
    REQUIRE_FALSE(rows.empty());
    bool saw_identity = false;
    for (const auto& r : rows) {
        CHECK(r.delta_eps <= r.cap + 1e-9);
        CHECK(r.norm_diff <= r.epsilon + 1e-12);
        CHECK(r.classification == "UniformlyAsymptoticallyStable");
        CHECK(r.openness_radius_val >= r.epsilon / 3.0 - 1e-9);
        if (r.family == "identity") {
            saw_identity = true;
            // delta of (1 - e/2) I + (e/2) projection is exactly 1 - e/2
            CHECK(r.delta_eps == doctest::Approx(r.cap).epsilon(1e-12));
        }
    }
    CHECK(saw_identity);

    CHECK_THROWS_AS(density_experiment(cfg, {2.0}), precondition_error);
    ExperimentConfig pc = cfg;
    pc.space = SpaceDescriptor::pcone(2, 2.0);
    CHECK_THROWS_AS(density_experiment(pc, {0.5}), precondition_error);
}

TEST_CASE("operator json round trip is bit identical") {
    SpaceDescriptor s = SpaceDescriptor::classical(3);
    MarkovOperator T = random_markov(s, 404);
    json j = to_json(T);
    MarkovOperator back = operator_from_json(j);
    CHECK(back.validated);
    CHECK(json(j["matrix"]).dump() == json(to_json(back)["matrix"]).dump());
    CHECK((T.matrix - back.matrix).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("quantum element and kraus readers") {
    SpaceDescriptor q = SpaceDescriptor::quantum(2);
    json ej;
    ej["space"] = {{"kind", "quantum"}, {"d", 2}};
    ej["matrix_re"] = {{0.7, 0.1}, {0.1, 0.3}};
    ej["matrix_im"] = {{0.0, 0.2}, {-0.2, 0.0}};
    Element x = element_from_json(ej);
    Eigen::MatrixXcd M = decode_hermitian(q, x.coords);
    CHECK(std::abs(M(0, 0).real() - 0.7) <= 1e-12);
    CHECK(std::abs(M(0, 1) - std::complex<double>(0.1, 0.2)) <= 1e-12);

    double r = std::sqrt(0.5);
    json oj;
    oj["space"] = {{"kind", "quantum"}, {"d", 2}};
    oj["kraus"] = {{{"re", {{1.0, 0.0}, {0.0, r}}}},
                   {{"re", {{0.0, r}, {0.0, 0.0}}}}};
    MarkovOperator chan = operator_from_json(oj);
    CHECK(chan.validated);
    CHECK(chan.cp_certified);
    Eigen::MatrixXcd K0 = Eigen::MatrixXcd::Zero(2, 2), K1 = Eigen::MatrixXcd::Zero(2, 2);
    K0(0, 0) = 1.0;
    K0(1, 1) = r;
    K1(0, 1) = r;
    MarkovOperator direct = channel_from_kraus({K0, K1}, q);
    CHECK((chan.matrix - direct.matrix).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("config json round trip and validation") {
    json j;
    j["space"] = {{"kind", "pcone"}, {"d", 3}, {"p", 1.5}};
    j["trials"] = 12;
    j["seed"] = 9;
    j["perturbation_magnitudes"] = {0.02, 0.2};
    ExperimentConfig c = config_from_json(j);
    CHECK(c.space.kind == SpaceKind::PCone);
    CHECK(c.space.p == doctest::Approx(1.5));
    CHECK(c.trials == 12);
    ExperimentConfig back = config_from_json(to_json(c));
    CHECK(to_json(back).dump() == to_json(c).dump());

    json bad = j;
    bad["trials"] = 0;
    CHECK_THROWS_AS(config_from_json(bad), malformed_error);
}

TEST_CASE("malformed inputs raise malformed errors") {
    CHECK_THROWS_AS(space_from_json(json{{"kind", "weird"}}), malformed_error);
    CHECK_THROWS_AS(space_from_json(json::array()), malformed_error);
    json rag;
    rag["space"] = {{"kind", "classical"}, {"n", 2}};
    rag["matrix"] = {{0.5, 0.5}, {0.5}};
    CHECK_THROWS_AS(operator_from_json(rag), malformed_error);
    json wrong_shape;
    wrong_shape["space"] = {{"kind", "classical"}, {"n", 3}};
    wrong_shape["matrix"] = {{1.0, 0.0}, {0.0, 1.0}};
    CHECK_THROWS_AS(operator_from_json(wrong_shape), malformed_error);
    CHECK_THROWS_AS(element_from_json(json{{"space", {{"kind", "classical"}, {"n", 2}}}}),
                    malformed_error);
}

TEST_CASE("csv emitters") {
    SpaceDescriptor s = SpaceDescriptor::classical(2);
    Eigen::MatrixXd Tm(2, 2), Sm(2, 2);
    Tm << 0.9, 0.2, 0.1, 0.8;
    Sm << 0.88, 0.215, 0.12, 0.785;
    TightnessOptions topts;
    topts.m = 1;
    topts.horizon = 6;
    PerturbationReport rep =
        tightness_report(validate_markov(Tm, s), validate_markov(Sm, s), topts);
    std::string csv = perturbation_csv(rep);
    CHECK(csv.rfind("n,actual,eq1,eq8,eq12\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

    ExperimentConfig cfg;
    cfg.space = SpaceDescriptor::classical(3);
    cfg.trials = 1;
    cfg.perturbation_magnitudes = {0.05};
    cfg.horizon = 4;
    TightnessTable tab = tightness_experiment(cfg);
    CHECK(tightness_csv(tab).rfind("space,magnitude,trial,m,", 0) == 0);
    std::vector<DensityRow> rows = density_experiment(cfg, {0.5});
    CHECK(density_csv(rows).rfind("family,epsilon,trial,", 0) == 0);
}

TEST_CASE("envelope json spells out the infinite rate") {
    Envelope zero = geometric_envelope(2, 0.0);
    json j = to_json(zero);
    CHECK(j["alpha"] == "inf");
    json j2 = to_json(geometric_envelope(1, 0.5));
    CHECK(j2["alpha"].get<double>() == doctest::Approx(std::log(2.0)));
}
