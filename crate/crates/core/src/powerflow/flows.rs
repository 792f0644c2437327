use serde::Serialize;

use crate::network::{branch_stamps, Cx, Network, NetworkError, NodeIndex};

/// Power and current flowing from the bus into each terminal of a branch,
/// per unit, one entry per terminal phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchFlow {
    pub id: String,
    pub s: [Vec<Cx>; 2],
    pub i: [Vec<Cx>; 2],
}

impl BranchFlow {
    pub fn loss(&self) -> Cx {
        self.s.iter().flatten().sum()
    }
}

pub fn recover_flows(net: &Network, nodes: &NodeIndex, v: &[Cx]) -> Result<Vec<BranchFlow>, NetworkError> {
    let stamps = branch_stamps(net, nodes)?;
    Ok(stamps
        .into_iter()
        .map(|st| {
            let vt: Vec<Cx> = st.nodes.iter().map(|&n| v[n]).collect();
            let cur: Vec<Cx> = (0..vt.len()).map(|r| (0..vt.len()).map(|c| st.y[(r, c)] * vt[c]).sum()).collect();
            let pow: Vec<Cx> = vt.iter().zip(&cur).map(|(v, i)| v * i.conj()).collect();
            let id = net.branches.get_by_index(st.branch).expect("branch exists").id.clone();
            BranchFlow {
                id,
                s: [pow[..st.n0].to_vec(), pow[st.n0..].to_vec()],
                i: [cur[..st.n0].to_vec(), cur[st.n0..].to_vec()],
            }
        })
        .collect())
}
