//! Role-inheritance graphs backing the `g` stub functions.
//!
//! A graph holds directed member → role edges, either global or scoped to a
//! tenant.  `has_role` asks whether a role is reachable through global edges;
//! `has_tenant_role` uses only edges of the given tenant — global edges never
//! satisfy a tenant query, and vice versa.  Both queries are reflexive
//! (`has_role(x, x)` is true), so a rule granting directly to a user matches
//! that user through `g(r.sub, p.sub)` without any edge.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum RbacError {
    #[error("role link from `{0}` to itself is not allowed")]
    SelfLoop(String),
}

type Adjacency = HashMap<String, BTreeSet<String>>;

/// Directed role-inheritance graph with global and per-tenant edge sets.
/// Input graphs may contain cycles; queries always terminate.
#[derive(Clone, Debug, Default)]
pub struct RoleGraph {
    global: Adjacency,
    tenants: HashMap<String, Adjacency>,
}

fn insert_edge(adj: &mut Adjacency, member: &str, role: &str) -> bool {
    adj.entry(member.to_string()).or_default().insert(role.to_string())
}

fn remove_edge(adj: &mut Adjacency, member: &str, role: &str) -> bool {
    let Some(roles) = adj.get_mut(member) else { return false };
    let removed = roles.remove(role);
    if roles.is_empty() {
        adj.remove(member);
    }
    removed
}

fn reachable(adj: &Adjacency, from: &str, to: &str) -> bool {
    if from == to {
        return true;
    }
    let mut visited: HashSet<&str> = HashSet::new();
    let mut stack: Vec<&str> = vec![from];
    while let Some(node) = stack.pop() {
        let Some(next) = adj.get(node) else { continue };
        for role in next {
            if role == to {
                return true;
            }
            if visited.insert(role) {
                stack.push(role);
            }
        }
    }
    false
}

impl RoleGraph {
    pub fn new() -> Self {
        RoleGraph::default()
    }

    /// Adds an inheritance edge; returns whether the graph changed.
    pub fn add_role_link(
        &mut self,
        member: &str,
        role: &str,
        tenant: Option<&str>,
    ) -> Result<bool, RbacError> {
        if member == role {
            return Err(RbacError::SelfLoop(member.to_string()));
        }
        let adj = match tenant {
            None => &mut self.global,
            Some(t) => self.tenants.entry(t.to_string()).or_default(),
        };
        Ok(insert_edge(adj, member, role))
    }

    /// Removes an edge if present; returns whether the graph changed.
    pub fn remove_role_link(&mut self, member: &str, role: &str, tenant: Option<&str>) -> bool {
        match tenant {
            None => remove_edge(&mut self.global, member, role),
            Some(t) => {
                let Some(adj) = self.tenants.get_mut(t) else { return false };
                let removed = remove_edge(adj, member, role);
                if adj.is_empty() {
                    self.tenants.remove(t);
                }
                removed
            }
        }
    }

    /// True iff `member == role` or `role` is reachable from `member`
    /// through global edges.
    pub fn has_role(&self, member: &str, role: &str) -> bool {
        reachable(&self.global, member, role)
    }

    /// True iff `member == role` or `role` is reachable from `member`
    /// through edges scoped to `tenant` only.
    pub fn has_tenant_role(&self, member: &str, role: &str, tenant: &str) -> bool {
        if member == role {
            return true;
        }
        match self.tenants.get(tenant) {
            Some(adj) => reachable(adj, member, role),
            None => false,
        }
    }

    /// Total number of stored edges, across all scopes.
    pub fn edge_count(&self) -> usize {
        let global: usize = self.global.values().map(BTreeSet::len).sum();
        let tenants: usize = self
            .tenants
            .values()
            .flat_map(|adj| adj.values().map(BTreeSet::len))
            .sum();
        global + tenants
    }
}
