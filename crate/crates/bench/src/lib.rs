//! Shared fixtures for the benchmarks in `benches/`.

use surveyml::nonresponse::draw_responses;
use surveyml::population::generate_population;
use surveyml::{rng, DesignSpec, DgpConfig, FinitePopulation, ResponseMechanism, SurveyData};

/// A generated population, an SRSWOR design and one sample with responses
/// from the default mechanism.
pub fn fixture(big_n: usize, n: usize, seed: u64) -> (FinitePopulation, DesignSpec, SurveyData) {
    let pop = generate_population(&DgpConfig::new(big_n, seed)).expect("valid population");
    let design = DesignSpec::srswor(big_n, n).expect("valid design");
    let sample = design.draw(&mut rng::stream(rng::derive(seed, rng::SAMPLING)));
    let mech = ResponseMechanism::appendix(&pop).expect("mechanism");
    let r =
        draw_responses(&mech, &sample, &pop, &mut rng::stream(rng::derive(seed, rng::RESPONSE))).expect("responses");
    let data = SurveyData::from_population(&pop, &sample, Some(r)).expect("survey data");
    (pop, design, data)
}

/// Response indicators as 0/1 targets.
pub fn response_target(data: &SurveyData) -> Vec<f64> {
    data.responses().expect("responses").indicators().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}
