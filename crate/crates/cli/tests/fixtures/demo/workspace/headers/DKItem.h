//
// Generated from the DemoKit binary.
//

@protocol DKItemDelegate <NSObject>
- (void)itemDidChange:(id)item;
@end

@interface DKItem : NSObject
- (void)setDelegate:(id)delegate;
- (id)tags;
- (void)performWithBlock:(id)block;
- (void *)rawBytes;
- (long long)compare:(id)other;
@end
