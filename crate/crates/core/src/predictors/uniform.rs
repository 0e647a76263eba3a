use crate::model::{
    Alphabet, Predictor, PredictorDescriptor, PredictorError, QuantizedDistribution,
};

/// Flat distribution over every slot, end-of-stream included.
#[derive(Debug, Clone)]
pub struct UniformPredictor {
    alphabet: Alphabet,
    dist: QuantizedDistribution,
}

impl UniformPredictor {
    pub fn new(alphabet: Alphabet) -> Self {
        let dist = QuantizedDistribution::uniform(alphabet.slots())
            .expect("alphabet slots are bounded by the quantization total");
        UniformPredictor { alphabet, dist }
    }
}

impl Predictor for UniformPredictor {
    fn descriptor(&self) -> PredictorDescriptor {
        PredictorDescriptor::new("uniform", Vec::new())
    }

    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn predict(&mut self) -> Result<&QuantizedDistribution, PredictorError> {
        Ok(&self.dist)
    }

    fn update(&mut self, symbol: u32) -> Result<(), PredictorError> {
        if symbol > self.alphabet.eos() {
            return Err(PredictorError::InvalidSymbol {
                symbol,
                size: self.alphabet.size(),
            });
        }
        Ok(())
    }

    fn reset_context(&mut self) -> Result<(), PredictorError> {
        Ok(())
    }

    fn is_adaptive(&self) -> bool {
        false
    }
}
