use super::{DataError, FeatureStore, ItemCatalog, Label, Outfit, Vocabulary};
use crate::model::ItemInput;
use crate::tensor::Scalar;

/// Turns item ids into model inputs: features from the store and, when a
/// vocabulary is attached, multi-hot descriptions from the catalog. Items
/// without a description encode to the zero vector.
#[derive(Clone, Copy, Debug)]
pub struct ItemResolver<'a> {
    pub store: &'a FeatureStore,
    pub catalog: &'a ItemCatalog,
    pub vocab: Option<&'a Vocabulary>,
}

impl<'a> ItemResolver<'a> {
    pub fn new(store: &'a FeatureStore, catalog: &'a ItemCatalog, vocab: Option<&'a Vocabulary>) -> Self {
        Self { store, catalog, vocab }
    }

    pub fn item<T: Scalar>(&self, item_id: &str) -> Result<ItemInput<T>, DataError> {
        let x = self
            .store
            .get(item_id)
            .ok_or_else(|| DataError::MissingItem(item_id.to_string()))?;
        let mut input = ItemInput::new(item_id, x.iter().map(|v| T::of(f64::from(*v))).collect());
        if let Some(vocab) = self.vocab {
            let tokens = self
                .catalog
                .get(item_id)
                .and_then(|m| m.tokens.as_deref())
                .unwrap_or(&[]);
            input.d = Some(vocab.encode(tokens));
        }
        Ok(input)
    }

    pub fn items<T: Scalar, S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<ItemInput<T>>, DataError> {
        ids.iter().map(|id| self.item(id.as_ref())).collect()
    }

    pub fn examples<T: Scalar>(&self, outfits: &[Outfit]) -> Result<Vec<Example<T>>, DataError> {
        outfits
            .iter()
            .map(|o| {
                Ok(Example {
                    outfit_id: o.outfit_id.clone(),
                    items: self.items(&o.item_ids)?,
                    label: o.label,
                })
            })
            .collect()
    }
}

/// A labeled outfit with its items resolved to model inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Example<T> {
    pub outfit_id: String,
    pub items: Vec<ItemInput<T>>,
    pub label: Label,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ItemMeta, ItemRecord};

    #[test]
    fn resolves_features_and_descriptions() {
        let store = FeatureStore::from_records(&[
            ItemRecord::new("a", vec![1.0, 2.0]),
            ItemRecord::new("b", vec![3.0, 4.0]),
        ])
        .unwrap();
        let mut catalog = ItemCatalog::new();
        catalog.insert(
            "a".into(),
            ItemMeta {
                category: None,
                tokens: Some(vec!["red".into(), "top".into()]),
            },
        );
        let vocab = Vocabulary::from_tokens(vec!["top".into(), "red".into(), "shoe".into()]).unwrap();
        let r = ItemResolver::new(&store, &catalog, Some(&vocab));
        let items: Vec<ItemInput<f64>> = r.items(&["a", "b"]).unwrap();
        assert_eq!(items[0].x, vec![1.0, 2.0]);
        assert_eq!(items[0].d.as_deref(), Some(&[1.0, 1.0, 0.0][..]));
        assert_eq!(items[1].d.as_deref(), Some(&[0.0, 0.0, 0.0][..]));
        assert!(matches!(r.item::<f32>("zzz"), Err(DataError::MissingItem(_))));

        let plain = ItemResolver::new(&store, &catalog, None);
        assert!(plain.item::<f32>("a").unwrap().d.is_none());
    }
}
