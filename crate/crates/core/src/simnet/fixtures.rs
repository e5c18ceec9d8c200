use super::{OutputDecl, Participant, Scenario, ScenarioEvent, UnitRef};
use crate::consensus::QuorumConfig;

fn exchange(sender: &str, receiver: &str, inputs: Vec<UnitRef>, outputs: Vec<OutputDecl>) -> ScenarioEvent {
    ScenarioEvent::Exchange {
        sender: sender.into(),
        receiver: receiver.into(),
        inputs,
        outputs,
    }
}

fn u(event: usize, output: u64) -> UnitRef {
    UnitRef::new(event, output)
}

/// Contamination at a processor, traced downstream.
///
/// `N_i` supplies raw lots to `N_j`, which mishandles two of them. Each of
/// `N_l` and `N_k` receives a product assembled from one contaminated and
/// one clean intermediate. Two further clean lots become a control product
/// at `N_k` that must stay out of any recall.
///
/// | event | transaction                                        |
/// |-------|----------------------------------------------------|
/// | 0     | `N_i` mints 6 raw lots                             |
/// | 1     | `N_i` -> `N_j`, lots carried over one to one       |
/// | 2     | `N_j` processes: outputs 0,1 contaminated, 2..5 clean |
/// | 3     | `N_j` -> `N_l`, product from 2:0 + 2:2             |
/// | 4     | `N_j` -> `N_k`, product from 2:1 + 2:3             |
/// | 5     | `N_j` -> `N_k`, control product from 2:4 + 2:5     |
/// | 6, 7  | 2:0 and 2:1 marked tainted                         |
pub fn figure2_fixture() -> Scenario {
    let lots = 6u64;
    let transfer = (0..lots).map(|i| OutputDecl::new("raw-lot", vec![u(0, i)])).collect();
    let processing = (0..lots)
        .map(|i| {
            let kind = if i < 2 { "intermediate/contaminated" } else { "intermediate" };
            OutputDecl::new(kind, vec![u(1, i)])
        })
        .collect();
    Scenario {
        seed: 2,
        participants: vec![
            Participant::new("N_i", Some("Riverside Raw Materials")),
            Participant::new("N_j", Some("Central Processing Works")),
            Participant::new("N_k", Some("Kestrel Retail")),
            Participant::new("N_l", Some("Lindqvist Foods")),
        ],
        script: vec![
            ScenarioEvent::Mint {
                node: "N_i".into(),
                kind: "raw-lot".into(),
                count: lots as u32,
            },
            exchange("N_i", "N_j", (0..lots).map(|i| u(0, i)).collect(), transfer),
            exchange("N_j", "N_j", (0..lots).map(|i| u(1, i)).collect(), processing),
            exchange("N_j", "N_l", vec![u(2, 0), u(2, 2)], vec![OutputDecl::from_all("product")]),
            exchange("N_j", "N_k", vec![u(2, 1), u(2, 3)], vec![OutputDecl::from_all("product")]),
            exchange("N_j", "N_k", vec![u(2, 4), u(2, 5)], vec![OutputDecl::from_all("product")]),
            ScenarioEvent::MarkTainted { unit: u(2, 0) },
            ScenarioEvent::MarkTainted { unit: u(2, 1) },
        ],
        quorum: QuorumConfig::bft(1),
    }
}

/// A brand ships authentic goods while an attacker mints look-alikes under
/// the brand's kind label and tries to spend a unit it never owned.
///
/// The forged spend (event 3) is rejected with `NotOwner`. The look-alike
/// mint (event 4) is valid ledger data, but its ancestry ends at the
/// attacker's pseudonym, never at a brand mint.
pub fn counterfeit_scenario() -> Scenario {
    Scenario {
        seed: 3,
        participants: vec![
            Participant::new("brand", Some("Maison Alpine")),
            Participant::new("retailer", Some("Galleria Outlet")),
            Participant::new("attacker", Some("Grey Market Imports")),
        ],
        script: vec![
            ScenarioEvent::Mint {
                node: "brand".into(),
                kind: "jacket".into(),
                count: 2,
            },
            exchange("brand", "retailer", vec![u(0, 0)], vec![OutputDecl::from_all("jacket")]),
            exchange("brand", "retailer", vec![u(0, 1)], vec![OutputDecl::from_all("jacket")]),
            exchange("attacker", "retailer", vec![u(1, 0)], vec![OutputDecl::from_all("jacket")]),
            ScenarioEvent::Mint {
                node: "attacker".into(),
                kind: "jacket".into(),
                count: 1,
            },
            exchange("attacker", "retailer", vec![u(4, 0)], vec![OutputDecl::from_all("jacket")]),
        ],
        quorum: QuorumConfig::bft(1),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::provenance::{RejectReason, UnitId};
    use crate::simnet::run_scenario;

    #[test]
    fn figure2_recall_is_the_contaminated_branch() {
        let run = run_scenario(&figure2_fixture()).unwrap();
        let r = &run.report;
        assert!(r.invariants_held(), "{:?}", r.violations);
        assert_eq!(r.committed.len(), 6);
        let tx = |e| r.tx_for_event(e).unwrap();
        let recall = r.recall.as_ref().unwrap();
        let expected: BTreeSet<UnitId> = [
            UnitId::new(tx(2), 0),
            UnitId::new(tx(2), 1),
            UnitId::new(tx(3), 0),
            UnitId::new(tx(4), 0),
        ]
        .into();
        assert_eq!(recall.unit_ids(), expected);
        assert!(!recall.unit_ids().contains(&UnitId::new(tx(5), 0)));
        let roles: BTreeSet<&str> = recall
            .live()
            .map(|e| r.role_of(&e.owner).unwrap())
            .collect();
        assert_eq!(roles, ["N_k", "N_l"].into());
    }

    #[test]
    fn counterfeit_is_rejected_or_rootless() {
        let run = run_scenario(&counterfeit_scenario()).unwrap();
        let r = &run.report;
        assert!(r.invariants_held(), "{:?}", r.violations);
        assert_eq!(r.rejections.len(), 1);
        assert_eq!(r.rejections[0].event, 3);
        assert!(matches!(r.rejections[0].reason, RejectReason::NotOwner(_)));

        let brand = r.participants[0].pseudonym;
        let attacker = r.participants[2].pseudonym;
        let fake = UnitId::new(r.tx_for_event(5).unwrap(), 0);
        let origin = |id: UnitId| r.origins.iter().find(|o| o.unit == id).unwrap();
        assert!(origin(fake).roots.iter().all(|root| root.minter == attacker));
        let real = UnitId::new(r.tx_for_event(1).unwrap(), 0);
        let brand_mint = r.tx_for_event(0).unwrap();
        assert!(origin(real)
            .roots
            .iter()
            .all(|root| root.minter == brand && root.unit.origin_tx == brand_mint));
    }
}
