//! The code example from README.md, compiled and asserted so the
//! documentation cannot drift from the API.

use errstruct::model::NormalLocation;
use errstruct::structure::from_model;
use errstruct::transforms::image_conditional;
use errstruct::{BranchMap, FisherMethod, Functional, ParameterDomain, PriorMeasure};

#[test]
fn readme_example_runs_as_printed() -> Result<(), errstruct::Error> {
    let domain = ParameterDomain::interval(-1.0, 1.0)?.exclude(vec![0.0])?;
    let model = NormalLocation::new(domain.clone())?;
    let prior = PriorMeasure::uniform(domain.clone())?;
    let structure = from_model(model, prior, FisherMethod::Analytic)?;

    let f = Functional::univariate(|t| t * t, Some(Box::new(|t| 2.0 * t)));
    let gamma = structure.gamma_quadratic(&f, &[0.5])?;
    assert!((gamma - 1.0).abs() < 1e-12);

    let square = BranchMap::square(domain)?;
    let image = image_conditional(&structure, &square)?;
    let id = Functional::coordinate(1, 0);
    assert!((image.structure().gamma_quadratic(&id, &[0.25])? - 1.0).abs() < 1e-12);
    Ok(())
}
