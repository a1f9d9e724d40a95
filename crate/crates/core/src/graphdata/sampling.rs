use std::borrow::Cow;
use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;

use super::ratings::RatingGraph;
use super::social::SocialGraph;

/// Default cap on `C(i)`, `B(j)` and `N(i)` during aggregation.
pub const DEFAULT_NEIGHBOR_CAP: usize = 64;

/// Read view over both graphs in which oversized neighbor lists are replaced
/// by a uniform subsample of at most `cap` entries. Lists at or under the cap
/// are borrowed untouched.
#[derive(Clone, Debug)]
pub struct NeighborView<'g> {
    ratings: &'g RatingGraph,
    social: &'g SocialGraph,
    items: HashMap<u32, Vec<(u32, u8)>>,
    raters: HashMap<u32, Vec<(u32, u8)>>,
    friends: HashMap<u32, Vec<u32>>,
}

fn subsample<T: Copy, R: Rng + ?Sized>(list: &[T], cap: usize, rng: &mut R) -> Vec<T> {
    let mut picks = index::sample(rng, list.len(), cap).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|k| list[k]).collect()
}

impl<'g> NeighborView<'g> {
    pub fn full(ratings: &'g RatingGraph, social: &'g SocialGraph) -> Self {
        Self {
            ratings,
            social,
            items: HashMap::new(),
            raters: HashMap::new(),
            friends: HashMap::new(),
        }
    }

    pub fn sampled<R: Rng + ?Sized>(
        ratings: &'g RatingGraph,
        social: &'g SocialGraph,
        cap: Option<usize>,
        rng: &mut R,
    ) -> Self {
        let mut view = Self::full(ratings, social);
        let Some(cap) = cap else { return view };
        for u in 0..ratings.n_users() as u32 {
            let list = ratings.items_of(u);
            if list.len() > cap {
                view.items.insert(u, subsample(list, cap, rng));
            }
        }
        for i in 0..ratings.n_items() as u32 {
            let list = ratings.raters_of(i);
            if list.len() > cap {
                view.raters.insert(i, subsample(list, cap, rng));
            }
        }
        for u in 0..social.n_users() as u32 {
            let list = social.friends_of(u);
            if list.len() > cap {
                view.friends.insert(u, subsample(list, cap, rng));
            }
        }
        view
    }

    pub fn ratings(&self) -> &'g RatingGraph {
        self.ratings
    }

    pub fn social(&self) -> &'g SocialGraph {
        self.social
    }

    pub fn items_of(&self, user: u32) -> &[(u32, u8)] {
        match self.items.get(&user) {
            Some(v) => v,
            None => self.ratings.items_of(user),
        }
    }

    pub fn raters_of(&self, item: u32) -> &[(u32, u8)] {
        match self.raters.get(&item) {
            Some(v) => v,
            None => self.ratings.raters_of(item),
        }
    }

    pub fn friends_of(&self, user: u32) -> &[u32] {
        if user as usize >= self.social.n_users() {
            return &[];
        }
        match self.friends.get(&user) {
            Some(v) => v,
            None => self.social.friends_of(user),
        }
    }

    /// `C(user)` minus the scored pair.
    pub fn items_excluding(&self, user: u32, item: u32) -> Cow<'_, [(u32, u8)]> {
        let list = self.items_of(user);
        if list.iter().any(|&(i, _)| i == item) {
            Cow::Owned(list.iter().copied().filter(|&(i, _)| i != item).collect())
        } else {
            Cow::Borrowed(list)
        }
    }

    /// `B(item)` minus the scored pair.
    pub fn raters_excluding(&self, item: u32, user: u32) -> Cow<'_, [(u32, u8)]> {
        let list = self.raters_of(item);
        if list.iter().any(|&(u, _)| u == user) {
            Cow::Owned(list.iter().copied().filter(|&(u, _)| u != user).collect())
        } else {
            Cow::Borrowed(list)
        }
    }
}
